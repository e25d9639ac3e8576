//! Gain feasibility, construction of `A_Z(0)` and runtime monitors for
//! `P = A_Z A_Z^T` and the drift of `V_Z`.
//!
//! `P` is laid out as
//!
//! ```text
//! | s_v    s_vx   S_pv^T |
//! | s_vx   s_x    S_px^T |
//! | S_pv   S_px   S_p    |
//! ```
//!
//! and obeys the linear ODE
//! `P' = (S_N - qI) P + P (S_N - qI)^T + sigma kx Cx Cx^T + kp C C^T`.
//! With the landmark blocks started at their steady values the three scalar
//! blocks stay inside fixed intervals whenever GNSS availability is
//! persistent, which keeps `P` (and hence `A_Z`) uniformly well conditioned.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::{ConstantMatrices, Mat3xX, Vec3};
use crate::observer::{Gains, ObserverState};

/// Result of the gain condition check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GainCheck {
    pub feasible: bool,
    pub margin: f64,
}

/// `2 n tau q e^{-2qT} kp + (8 q^2 tau^2 e^{-4qT} - 1) kx`, required to be positive.
pub fn check_gain_condition(gains: &Gains, n: usize) -> Result<GainCheck> {
    gains.validate()?;
    let margin = gain_margin(gains, n);
    Ok(GainCheck {
        feasible: margin > 0.0,
        margin,
    })
}

fn gain_margin(g: &Gains, n: usize) -> f64 {
    let (q, t, tau) = (g.q, g.tpe_period, g.tpe_on);
    let decay = (-2.0 * q * t).exp();
    2.0 * n as f64 * tau * q * decay * g.kp + (8.0 * q * q * tau * tau * decay * decay - 1.0) * g.kx
}

/// `delta = kx e^{-2qT} tau`, the guaranteed GNSS contribution to `s_x`.
pub fn persistence_floor(g: &Gains) -> f64 {
    g.kx * (-2.0 * g.q * g.tpe_period).exp() * g.tpe_on
}

/// Closed interval `[lower, upper]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, x: f64, slack: f64) -> bool {
        x >= self.lower - slack && x <= self.upper + slack
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

/// Intervals for the scalar blocks of `P` and the floor on the Schur
/// determinant `det(P / C_p)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PBounds {
    pub s_x: Interval,
    pub s_vx: Interval,
    pub s_v: Interval,
    pub schur_det_lower: f64,
}

pub fn p_bounds(gains: &Gains, n: usize) -> PBounds {
    let (kx, kp, q) = (gains.kx, gains.kp, gains.q);
    let nk = n as f64 * kp;
    let delta = persistence_floor(gains);
    PBounds {
        s_x: Interval {
            lower: nk / (2.0 * q) + delta,
            upper: (nk + kx) / (2.0 * q),
        },
        s_vx: Interval {
            lower: -(nk + kx) / (4.0 * q * q),
            upper: -nk / (4.0 * q * q) - delta / (2.0 * q),
        },
        s_v: Interval {
            lower: nk / (4.0 * q.powi(3)) + delta / (2.0 * q * q),
            upper: (nk + kx) / (4.0 * q.powi(3)),
        },
        schur_det_lower: kx * gain_margin(gains, n) / (16.0 * q.powi(4)),
    }
}

/// Scalar seeds `(s_x(0), s_vx(0), s_v(0))` of the initial `P`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct P0Seeds {
    pub s_x: f64,
    pub s_vx: f64,
    pub s_v: f64,
}

impl P0Seeds {
    /// The seeds realized by the circle scenario's `A_Z(0)`.
    pub fn reference() -> Self {
        Self {
            s_x: 52.0,
            s_vx: -260.0,
            s_v: 2600.0,
        }
    }

    /// Midpoint of every admissible interval.
    pub fn midpoint(gains: &Gains, n: usize) -> Self {
        let b = p_bounds(gains, n);
        Self {
            s_x: b.s_x.midpoint(),
            s_vx: b.s_vx.midpoint(),
            s_v: b.s_v.midpoint(),
        }
    }
}

/// Symmetric positive-definite `(n+2) x (n+2)` matrix with named blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct PMatrix(DMatrix<f64>);

impl PMatrix {
    /// Wraps `p` after checking symmetry (to `1e-12` relative) and positive definiteness.
    pub fn new(p: DMatrix<f64>) -> Result<Self> {
        if !p.is_square() || p.nrows() < 3 {
            return Err(Error::DimensionMismatch {
                expected: "square matrix of size >= 3".into(),
                found: format!("{} x {}", p.nrows(), p.ncols()),
            });
        }
        let asym = (&p - p.transpose()).amax();
        if asym > 1e-12 * (1.0 + p.amax()) {
            return Err(Error::InvalidParameter(format!(
                "P is not symmetric (max asymmetry {asym:e})"
            )));
        }
        if Cholesky::new(p.clone()).is_none() {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self(p))
    }

    /// `A A^T` without the positive-definiteness check.
    pub fn from_factor(a: &DMatrix<f64>) -> Self {
        Self(a * a.transpose())
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.nrows() - 2
    }

    pub fn s_v(&self) -> f64 {
        self.0[(0, 0)]
    }

    pub fn s_vx(&self) -> f64 {
        self.0[(0, 1)]
    }

    pub fn s_x(&self) -> f64 {
        self.0[(1, 1)]
    }

    pub fn s_pv(&self) -> DVector<f64> {
        self.0.view((2, 0), (self.n(), 1)).column(0).into_owned()
    }

    pub fn s_px(&self) -> DVector<f64> {
        self.0.view((2, 1), (self.n(), 1)).column(0).into_owned()
    }

    pub fn s_p(&self) -> DMatrix<f64> {
        self.0.view((2, 2), (self.n(), self.n())).into_owned()
    }

    /// `det(A_p - B_p C_p^{-1} B_p^T)` from the live blocks.
    pub fn schur_det(&self) -> f64 {
        let n = self.n();
        let a_p = self.0.view((0, 0), (2, 2)).into_owned();
        let b_p = self.0.view((0, 2), (2, n)).into_owned();
        let c_p = self.s_p();
        match c_p.clone().cholesky() {
            Some(ch) => (a_p - &b_p * ch.solve(&b_p.transpose())).determinant(),
            None => f64::NAN,
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.0.clone().symmetric_eigenvalues().min()
    }

    /// `max |S_p - (kp / 2q) I|`.
    pub fn s_p_deviation(&self, gains: &Gains) -> f64 {
        let n = self.n();
        (self.s_p() - DMatrix::identity(n, n) * (gains.kp / (2.0 * gains.q))).amax()
    }

    /// Largest deviation of `(S_p, S_px, S_pv)` from their steady values.
    pub fn steady_block_deviation(&self, gains: &Gains) -> f64 {
        let n = self.n();
        let (kp, q) = (gains.kp, gains.q);
        let sp = (self.s_p() - DMatrix::identity(n, n) * (kp / (2.0 * q))).amax();
        let spx = self.s_px().add_scalar(kp / (2.0 * q)).amax();
        let spv = self.s_pv().add_scalar(-kp / (4.0 * q * q)).amax();
        sp.max(spx).max(spv)
    }
}

/// Builds the initial `P` from the steady landmark blocks and the three seeds.
pub fn build_p0(gains: &Gains, n: usize, seeds: &P0Seeds) -> Result<PMatrix> {
    gains.validate()?;
    let b = p_bounds(gains, n);
    for (name, value, iv) in [
        ("s_x(0)", seeds.s_x, b.s_x),
        ("s_vx(0)", seeds.s_vx, b.s_vx),
        ("s_v(0)", seeds.s_v, b.s_v),
    ] {
        if !iv.contains(value, 0.0) {
            return Err(Error::IntervalViolation {
                bound: name,
                value,
                lower: iv.lower,
                upper: iv.upper,
            });
        }
    }
    let (kp, q) = (gains.kp, gains.q);
    let m = n + 2;
    let mut p = DMatrix::zeros(m, m);
    p[(0, 0)] = seeds.s_v;
    p[(0, 1)] = seeds.s_vx;
    p[(1, 0)] = seeds.s_vx;
    p[(1, 1)] = seeds.s_x;
    for i in 0..n {
        p[(0, i + 2)] = kp / (4.0 * q * q);
        p[(i + 2, 0)] = kp / (4.0 * q * q);
        p[(1, i + 2)] = -kp / (2.0 * q);
        p[(i + 2, 1)] = -kp / (2.0 * q);
        p[(i + 2, i + 2)] = kp / (2.0 * q);
    }
    let pm = PMatrix(p);
    if !(pm.schur_det() > 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    PMatrix::new(pm.0)
}

/// Lower-triangular Cholesky factor `L` with `L L^T = P`.
pub fn az_from_p0(p0: &PMatrix) -> Result<DMatrix<f64>> {
    Cholesky::new(p0.0.clone())
        .map(|c| c.l())
        .ok_or(Error::NotPositiveDefinite)
}

/// Factor of a steady-block `P` with the sparsity
///
/// ```text
/// | a  0  b 1^T |
/// | c  d  e 1^T |
/// | 0  0  f I   |
/// ```
///
/// For the reference seeds this reproduces the circle scenario's `A_Z(0)`.
pub fn structured_factor(p0: &PMatrix) -> Result<DMatrix<f64>> {
    let n = p0.n();
    let nf = n as f64;
    let f2 = p0.s_p()[(0, 0)];
    if !(f2 > 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    let f = f2.sqrt();
    let b = p0.s_pv()[0] / f;
    let e = p0.s_px()[0] / f;
    let a2 = p0.s_v() - nf * b * b;
    if !(a2 > 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    let a = a2.sqrt();
    let c = (p0.s_vx() - nf * b * e) / a;
    let d2 = p0.s_x() - c * c - nf * e * e;
    if !(d2 > 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    let d = d2.sqrt();
    let m = n + 2;
    let mut out = DMatrix::zeros(m, m);
    out[(0, 0)] = a;
    out[(1, 0)] = c;
    out[(1, 1)] = d;
    for i in 0..n {
        out[(0, i + 2)] = b;
        out[(1, i + 2)] = e;
        out[(i + 2, i + 2)] = f;
    }
    Ok(out)
}

/// Right-hand side of the `P` ODE.
pub fn p_dynamics_rhs(
    p: &DMatrix<f64>,
    sigma: bool,
    gains: &Gains,
    consts: &ConstantMatrices,
) -> DMatrix<f64> {
    let m = p.nrows();
    let a = &consts.s_n - DMatrix::identity(m, m) * gains.q;
    let s = if sigma { 1.0 } else { 0.0 };
    &a * p
        + p * a.transpose()
        + &consts.cx * consts.cx.transpose() * (s * gains.kx)
        + &consts.c * consts.c.transpose() * gains.kp
}

/// `V_Z' = -V_Z M + B`.
#[derive(Clone, Debug, PartialEq)]
pub struct VzDrift {
    pub m: DMatrix<f64>,
    pub b: Mat3xX,
}

impl VzDrift {
    pub fn rate(&self, vz: &Mat3xX) -> Mat3xX {
        -(vz * &self.m) + &self.b
    }

    /// Smallest eigenvalue of `M - qI`.
    pub fn excess_min_eigenvalue(&self, q: f64) -> f64 {
        let k = self.m.nrows();
        let sym = (&self.m + self.m.transpose()) * 0.5 - DMatrix::identity(k, k) * q;
        sym.symmetric_eigenvalues().min()
    }
}

/// The forcing `B = W_g A_Z + (kx + kRx) sigma y_x (A_Z^{-1} Cx)^T` of the `V_Z` dynamics.
pub fn vz_forcing(
    obs: &ObserverState,
    sigma: bool,
    gains: &Gains,
    yx: &Vec3,
    consts: &ConstantMatrices,
) -> Result<Mat3xX> {
    let s = if sigma { 1.0 } else { 0.0 };
    let acx: DVector<f64> = obs.az_inverse()? * &consts.cx;
    Ok(&consts.w_g * obs.az() + (yx * s) * acx.transpose() * (gains.kx + gains.k_rx))
}

/// `V_Z' = -V_Z M + B`, after checking that `M - qI` is positive semi-definite.
pub fn vz_drift(
    obs: &ObserverState,
    sigma: bool,
    gains: &Gains,
    yx: &Vec3,
    consts: &ConstantMatrices,
) -> Result<VzDrift> {
    let drift = vz_drift_unchecked(obs, sigma, gains, yx, consts)?;
    let excess = drift.excess_min_eigenvalue(gains.q);
    if excess < -1e-9 * (1.0 + drift.m.amax()) {
        return Err(Error::InvalidParameter(format!(
            "M - qI is not positive semi-definite (min eigenvalue {excess:e})"
        )));
    }
    Ok(drift)
}

pub fn vz_drift_unchecked(
    obs: &ObserverState,
    sigma: bool,
    gains: &Gains,
    yx: &Vec3,
    consts: &ConstantMatrices,
) -> Result<VzDrift> {
    let a_inv = obs.az_inverse()?;
    let s = if sigma { 1.0 } else { 0.0 };
    let m_dim = obs.n() + 2;
    let acx: DVector<f64> = &a_inv * &consts.cx;
    let ac = &a_inv * &consts.c;
    let n = obs.n() as f64;
    let m = &acx * acx.transpose() * (s * (0.5 * gains.kx + gains.k_rx))
        + &ac * ac.transpose() * (0.5 * gains.kp + n * gains.k_rp)
        + DMatrix::identity(m_dim, m_dim) * gains.q;
    let b = vz_forcing(obs, sigma, gains, yx, consts)?;
    Ok(VzDrift { m, b })
}

/// A single bound excursion recorded by [`PMonitor`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundViolation {
    pub step: usize,
    pub time: f64,
    pub quantity: &'static str,
    pub value: f64,
    pub limit: f64,
}

/// Snapshot of the `P` diagnostics at one step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PDiagnostics {
    pub s_x: f64,
    pub s_vx: f64,
    pub s_v: f64,
    pub schur_det: f64,
    pub min_sv_az: f64,
    pub s_p_deviation: f64,
    pub steady_deviation: f64,
}

pub fn p_diagnostics(obs: &ObserverState, gains: &Gains) -> PDiagnostics {
    p_diagnostics_of(&PMatrix::from_factor(obs.az()), obs, gains)
}

fn p_diagnostics_of(p: &PMatrix, obs: &ObserverState, gains: &Gains) -> PDiagnostics {
    PDiagnostics {
        s_x: p.s_x(),
        s_vx: p.s_vx(),
        s_v: p.s_v(),
        schur_det: p.schur_det(),
        min_sv_az: obs.min_singular_value(),
        s_p_deviation: p.s_p_deviation(gains),
        steady_deviation: p.steady_block_deviation(gains),
    }
}

/// Tracks the `P` bounds along a run.
#[derive(Clone, Debug)]
pub struct PMonitor {
    bounds: PBounds,
    gains: Gains,
    slack: f64,
    eigen_every: usize,
    pub violations: Vec<BoundViolation>,
    pub min_schur_det: f64,
    pub min_sv_az: f64,
    pub min_eigenvalue: f64,
    pub max_s_p_deviation: f64,
    pub max_steady_deviation: f64,
    pub extremes: [Interval; 3],
}

impl PMonitor {
    /// `slack` is the tolerance applied to the scalar-block intervals.
    pub fn new(gains: &Gains, n: usize, slack: f64) -> Self {
        let empty = Interval {
            lower: f64::INFINITY,
            upper: f64::NEG_INFINITY,
        };
        Self {
            bounds: p_bounds(gains, n),
            gains: *gains,
            slack,
            eigen_every: 1000,
            violations: Vec::new(),
            min_schur_det: f64::INFINITY,
            min_sv_az: f64::INFINITY,
            min_eigenvalue: f64::INFINITY,
            max_s_p_deviation: 0.0,
            max_steady_deviation: 0.0,
            extremes: [empty; 3],
        }
    }

    pub fn bounds(&self) -> &PBounds {
        &self.bounds
    }

    pub fn observe(&mut self, step: usize, time: f64, obs: &ObserverState) -> PDiagnostics {
        let p = PMatrix::from_factor(obs.az());
        let d = p_diagnostics_of(&p, obs, &self.gains);
        let b = self.bounds;
        for (i, (name, value, iv)) in [
            ("s_x", d.s_x, b.s_x),
            ("s_vx", d.s_vx, b.s_vx),
            ("s_v", d.s_v, b.s_v),
        ]
        .into_iter()
        .enumerate()
        {
            self.extremes[i].lower = self.extremes[i].lower.min(value);
            self.extremes[i].upper = self.extremes[i].upper.max(value);
            if !iv.contains(value, self.slack) {
                let limit = if value < iv.lower { iv.lower } else { iv.upper };
                self.violations.push(BoundViolation {
                    step,
                    time,
                    quantity: name,
                    value,
                    limit,
                });
            }
        }
        if !(d.schur_det >= b.schur_det_lower - self.slack) {
            self.violations.push(BoundViolation {
                step,
                time,
                quantity: "schur_det",
                value: d.schur_det,
                limit: b.schur_det_lower,
            });
        }
        self.min_schur_det = self.min_schur_det.min(d.schur_det);
        self.min_sv_az = self.min_sv_az.min(d.min_sv_az);
        self.max_s_p_deviation = self.max_s_p_deviation.max(d.s_p_deviation);
        self.max_steady_deviation = self.max_steady_deviation.max(d.steady_deviation);
        if step.is_multiple_of(self.eigen_every) {
            self.min_eigenvalue = self.min_eigenvalue.min(p.min_eigenvalue());
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_gains() -> Gains {
        Gains::default()
    }

    #[test]
    fn reference_margin() {
        // 2*5*5*0.1*e^-2*2 + (8*0.01*25*e^-4 - 1)*1
        let expected = 10.0 * (-2.0f64).exp() + 2.0 * (-4.0f64).exp() - 1.0;
        let c = check_gain_condition(&reference_gains(), 5).unwrap();
        assert!(c.feasible);
        assert!((c.margin - expected).abs() < 1e-14);
        assert!((c.margin - 0.390).abs() < 1e-3);
    }

    #[test]
    fn small_kp_is_infeasible() {
        let g = Gains {
            kp: 1e-6,
            q: 0.01,
            tpe_on: 1.0,
            ..reference_gains()
        };
        let c = check_gain_condition(&g, 5).unwrap();
        assert!(!c.feasible && c.margin < 0.0);
    }

    #[test]
    fn gnss_alone_never_suffices() {
        // q tau e^{-2qT} <= qT e^{-2qT} <= 1/(2e) < 1/sqrt(8)
        for i in 1..200 {
            let g = Gains {
                kp: 1e-12,
                q: i as f64 * 0.01,
                tpe_period: 5.0,
                tpe_on: 4.999,
                ..reference_gains()
            };
            assert!(!check_gain_condition(&g, 5).unwrap().feasible);
        }
    }

    #[test]
    fn non_positive_gains_rejected() {
        let g = Gains {
            q: -0.1,
            ..reference_gains()
        };
        assert!(check_gain_condition(&g, 5).is_err());
    }

    #[test]
    fn midpoint_seeds_give_pd() {
        let g = reference_gains();
        let p = build_p0(&g, 5, &P0Seeds::midpoint(&g, 5)).unwrap();
        assert!(p.min_eigenvalue() > 0.0);
    }

    #[test]
    fn low_sx_rejected() {
        let g = reference_gains();
        let seeds = P0Seeds {
            s_x: 50.0,
            ..P0Seeds::reference()
        };
        match build_p0(&g, 5, &seeds) {
            Err(Error::IntervalViolation { bound, .. }) => assert_eq!(bound, "s_x(0)"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn identity_factor() {
        let p = PMatrix::new(DMatrix::identity(4, 4)).unwrap();
        let a = az_from_p0(&p).unwrap();
        assert!((&a * a.transpose() - DMatrix::identity(4, 4)).amax() < 1e-15);
    }

    #[test]
    fn non_pd_rejected() {
        let mut m = DMatrix::identity(3, 3);
        m[(2, 2)] = -1.0;
        assert!(matches!(PMatrix::new(m), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn steady_landmark_block_is_stationary() {
        let g = reference_gains();
        let consts = ConstantMatrices::new(5, 9.81);
        let p = build_p0(&g, 5, &P0Seeds::reference()).unwrap();
        let rhs = p_dynamics_rhs(p.matrix(), true, &g, &consts);
        assert!(rhs.view((2, 2), (5, 5)).amax() < 1e-13);
        assert!(rhs.view((2, 1), (5, 1)).amax() < 1e-13);
        assert!(rhs.view((2, 0), (5, 1)).amax() < 1e-13);
    }

    #[test]
    fn vz_drift_without_gnss() {
        let n = 2;
        let consts = ConstantMatrices::new(n, 9.81);
        let obs = ObserverState::new(
            crate::lie::SeElement::identity(n),
            Mat3xX::zeros(n + 2),
            DMatrix::identity(n + 2, n + 2) * 2.0,
        )
        .unwrap();
        let d = vz_drift(&obs, false, &Gains::default(), &Vec3::zeros(), &consts).unwrap();
        assert_eq!(d.b, &consts.w_g * obs.az());
        assert!(d.excess_min_eigenvalue(0.1) >= -1e-15);
    }
}
