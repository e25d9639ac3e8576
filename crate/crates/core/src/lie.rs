//! Matrix Lie groups used by the observer.
//!
//! * `SO(3)` rotations ([`Rotation`]).
//! * `SE_{n+2}(3)` extended poses ([`SeElement`]): a rotation plus a `3 x (n+2)`
//!   block whose columns are velocity, position and the `n` landmark positions.
//! * `SIM_{n+2}(3)` ([`SimElement`]): the same with an invertible lower-right
//!   `(n+2) x (n+2)` block `A` in place of the identity.
//!
//! Elements are stored by blocks; [`SeElement::to_matrix`] and
//! [`SimElement::to_matrix`] give the dense `(n+5) x (n+5)` embedding
//!
//! ```text
//! | R  V |
//! | 0  A |
//! ```
//!
//! Integration steps multiply by exponentials on both sides, so group
//! membership is preserved without re-orthonormalization.

use nalgebra::{DMatrix, DVector, Dyn, Matrix3, OMatrix, Vector3, U3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
/// `3 x m` matrix with a runtime column count.
pub type Mat3xX = OMatrix<f64, U3, Dyn>;

/// Orthogonality and determinant tolerance for rotations.
pub const GROUP_TOL: f64 = 1e-9;
/// Tolerance for group axioms checked against dense arithmetic.
pub const AXIOM_TOL: f64 = 1e-11;
/// Smallest admissible singular value of an `A` block.
pub const MIN_SINGULAR_VALUE: f64 = 1e-9;

/// Below this angle the trigonometric coefficients switch to Taylor series.
const SMALL_ANGLE: f64 = 0.1;

/// Skew-symmetric matrix with `hat(w) * v == w.cross(v)`.
pub fn hat(w: &Vec3) -> Mat3 {
    Mat3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Inverse of [`hat`]. Rejects matrices that are not antisymmetric.
pub fn vee(m: &Mat3) -> Result<Vec3> {
    let asym = (m + m.transpose()).norm();
    if !(asym < 1e-9) {
        return Err(Error::NotAntisymmetric(asym));
    }
    Ok(Vec3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    ))
}

/// Coefficients `(sin t / t, (1 - cos t) / t^2, (t - sin t) / t^3, (t^2/2 + cos t - 1) / t^4)`
/// of the SO(3) exponential and its first two Jacobian series.
fn so3_coefficients(theta: f64) -> [f64; 4] {
    if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        let t4 = t2 * t2;
        let t6 = t4 * t2;
        [
            1.0 - t2 / 6.0 + t4 / 120.0 - t6 / 5040.0,
            0.5 - t2 / 24.0 + t4 / 720.0 - t6 / 40320.0,
            1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0 - t6 / 362880.0,
            1.0 / 24.0 - t2 / 720.0 + t4 / 40320.0 - t6 / 3628800.0,
        ]
    } else {
        let (s, c) = theta.sin_cos();
        let t2 = theta * theta;
        [
            s / theta,
            (1.0 - c) / t2,
            (theta - s) / (t2 * theta),
            (0.5 * t2 + c - 1.0) / (t2 * t2),
        ]
    }
}

/// `exp(hat(omega * dt))` by the Rodrigues formula.
pub fn so3_exp(omega: &Vec3, dt: f64) -> Rotation {
    let phi = omega * dt;
    let [a, b, _, _] = so3_coefficients(phi.norm());
    let k = hat(&phi);
    Rotation(Mat3::identity() + k * a + k * k * b)
}

/// Series `sum_k phi^k / (k+1)!` and `sum_k phi^k / (k+2)!` for `phi = hat(v)`.
fn so3_jacobians(v: &Vec3) -> (Mat3, Mat3) {
    let [_, b, c, d] = so3_coefficients(v.norm());
    let k = hat(v);
    let k2 = k * k;
    let j1 = Mat3::identity() + k * b + k2 * c;
    let j2 = Mat3::identity() * 0.5 + k * c + k2 * d;
    (j1, j2)
}

/// Element of SO(3).
#[derive(Clone, Debug, PartialEq)]
pub struct Rotation(Mat3);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Mat3::identity())
    }

    /// Accepts `m` if it is orthogonal with unit determinant to [`GROUP_TOL`].
    pub fn from_matrix(m: Mat3) -> Result<Self> {
        let r = Rotation(m);
        let (orth, det) = r.membership_error();
        if orth < GROUP_TOL && det < GROUP_TOL {
            Ok(r)
        } else {
            Err(Error::NotInGroup(format!(
                "rotation: |R^T R - I| = {orth:e}, |det R - 1| = {det:e}"
            )))
        }
    }

    /// Rotation by `angle` about `axis` (the axis is normalized).
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::identity();
        }
        so3_exp(&(axis / n), angle)
    }

    /// `exp(hat(v))` for a rotation vector `v`.
    pub fn from_rotation_vector(v: &Vec3) -> Self {
        so3_exp(v, 1.0)
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rotation(self.0.transpose())
    }

    pub fn compose(&self, other: &Rotation) -> Self {
        Rotation(self.0 * other.0)
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// `(|R^T R - I|_F, |det R - 1|)`.
    pub fn membership_error(&self) -> (f64, f64) {
        (
            (self.0.transpose() * self.0 - Mat3::identity()).norm(),
            (self.0.determinant() - 1.0).abs(),
        )
    }

    pub(crate) fn debug_check(&self) {
        debug_assert!({
            let (o, d) = self.membership_error();
            o < GROUP_TOL && d < GROUP_TOL
        });
    }
}

impl std::ops::Mul<&Vec3> for &Rotation {
    type Output = Vec3;
    fn mul(self, v: &Vec3) -> Vec3 {
        self.0 * v
    }
}

fn check_cols(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: format!("{expected} translational columns"),
            found: format!("{found}"),
        })
    }
}

/// Element of `SE_{n+2}(3)`: `(R, V)` with `V = (v, x, p_1, ..., p_n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeElement {
    rot: Rotation,
    v: Mat3xX,
}

impl SeElement {
    pub fn new(rot: Rotation, v: Mat3xX) -> Result<Self> {
        if v.ncols() < 2 {
            return Err(Error::DimensionMismatch {
                expected: "at least 2 translational columns".into(),
                found: v.ncols().to_string(),
            });
        }
        Ok(Self { rot, v })
    }

    /// Builds the state from its physical parts.
    pub fn from_parts(rot: Rotation, velocity: Vec3, position: Vec3, landmarks: &[Vec3]) -> Self {
        let mut v = Mat3xX::zeros(landmarks.len() + 2);
        v.set_column(0, &velocity);
        v.set_column(1, &position);
        for (i, p) in landmarks.iter().enumerate() {
            v.set_column(i + 2, p);
        }
        Self { rot, v }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rot: Rotation::identity(),
            v: Mat3xX::zeros(n + 2),
        }
    }

    /// Number of landmarks.
    pub fn n(&self) -> usize {
        self.v.ncols() - 2
    }

    pub fn rotation(&self) -> &Rotation {
        &self.rot
    }

    pub fn translation(&self) -> &Mat3xX {
        &self.v
    }

    pub fn velocity(&self) -> Vec3 {
        self.v.column(0).into_owned()
    }

    pub fn position(&self) -> Vec3 {
        self.v.column(1).into_owned()
    }

    pub fn landmark(&self, i: usize) -> Vec3 {
        self.v.column(i + 2).into_owned()
    }

    pub fn compose(&self, other: &SeElement) -> Result<Self> {
        check_cols(self.v.ncols(), other.v.ncols())?;
        Ok(Self {
            rot: self.rot.compose(&other.rot),
            v: self.rot.matrix() * &other.v + &self.v,
        })
    }

    /// `(R^T, -R^T V)`.
    pub fn inverse(&self) -> Self {
        let rt = self.rot.transpose();
        let v = -(rt.matrix() * &self.v);
        Self { rot: rt, v }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let m = self.v.ncols();
        let mut out = DMatrix::identity(m + 3, m + 3);
        out.view_mut((0, 0), (3, 3)).copy_from(self.rot.matrix());
        out.view_mut((0, 3), (3, m)).copy_from(&self.v);
        out
    }

    /// Reads an `(n+5) x (n+5)` embedding; the lower blocks must be `(0, I)`.
    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        SimElement::from_matrix(m)?.into_se()
    }

    pub fn to_sim(&self) -> SimElement {
        SimElement {
            rot: self.rot.clone(),
            v: self.v.clone(),
            a: DMatrix::identity(self.v.ncols(), self.v.ncols()),
        }
    }
}

/// Element of `SIM_{n+2}(3)`: `(R, V, A)` with `A` invertible.
#[derive(Clone, Debug, PartialEq)]
pub struct SimElement {
    rot: Rotation,
    v: Mat3xX,
    a: DMatrix<f64>,
}

impl SimElement {
    pub fn new(rot: Rotation, v: Mat3xX, a: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() || a.nrows() != v.ncols() {
            return Err(Error::DimensionMismatch {
                expected: format!("{0} x {0} A block", v.ncols()),
                found: format!("{} x {}", a.nrows(), a.ncols()),
            });
        }
        Ok(Self { rot, v, a })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rot: Rotation::identity(),
            v: Mat3xX::zeros(n + 2),
            a: DMatrix::identity(n + 2, n + 2),
        }
    }

    pub fn n(&self) -> usize {
        self.v.ncols() - 2
    }

    pub fn rotation(&self) -> &Rotation {
        &self.rot
    }

    pub fn translation(&self) -> &Mat3xX {
        &self.v
    }

    pub fn scaling(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Smallest singular value of the `A` block.
    pub fn min_singular_value(&self) -> f64 {
        min_singular_value(&self.a)
    }

    /// Inverse of the `A` block, rejecting near-singular blocks.
    pub fn scaling_inverse(&self) -> Result<DMatrix<f64>> {
        checked_inverse(&self.a)
    }

    pub fn compose(&self, other: &SimElement) -> Result<Self> {
        check_cols(self.v.ncols(), other.v.ncols())?;
        Ok(Self {
            rot: self.rot.compose(&other.rot),
            v: self.rot.matrix() * &other.v + &self.v * &other.a,
            a: &self.a * &other.a,
        })
    }

    /// `(R^T, -R^T V A^{-1}, A^{-1})`.
    pub fn inverse(&self) -> Result<Self> {
        let a_inv = checked_inverse(&self.a)?;
        let rt = self.rot.transpose();
        let v = -(rt.matrix() * &self.v * &a_inv);
        Ok(Self {
            rot: rt,
            v,
            a: a_inv,
        })
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let m = self.v.ncols();
        let mut out = DMatrix::zeros(m + 3, m + 3);
        out.view_mut((0, 0), (3, 3)).copy_from(self.rot.matrix());
        out.view_mut((0, 3), (3, m)).copy_from(&self.v);
        out.view_mut((3, 3), (m, m)).copy_from(&self.a);
        out
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() < 5 {
            return Err(Error::DimensionMismatch {
                expected: "square embedding of size >= 5".into(),
                found: format!("{} x {}", m.nrows(), m.ncols()),
            });
        }
        let k = m.nrows() - 3;
        let lower_left = m.view((3, 0), (k, 3)).amax();
        if lower_left > AXIOM_TOL {
            return Err(Error::NotInGroup(format!(
                "lower-left block has magnitude {lower_left:e}"
            )));
        }
        let rot = Rotation::from_matrix(m.fixed_view::<3, 3>(0, 0).into_owned())?;
        Ok(Self {
            rot,
            v: m.generic_view((0, 3), (U3, Dyn(k))).into_owned(),
            a: m.view((3, 3), (k, k)).into_owned(),
        })
    }

    /// Drops the `A` block, which must equal the identity to [`AXIOM_TOL`].
    pub fn into_se(self) -> Result<SeElement> {
        let k = self.a.nrows();
        let dev = (&self.a - DMatrix::<f64>::identity(k, k)).amax();
        if dev > AXIOM_TOL {
            return Err(Error::NotInGroup(format!(
                "A block deviates from identity by {dev:e}"
            )));
        }
        Ok(SeElement {
            rot: self.rot,
            v: self.v,
        })
    }
}

/// Conversion into and out of the general `SIM_{n+2}(3)` representation.
pub trait GroupElement: Sized {
    fn to_sim(&self) -> SimElement;
    fn from_sim(s: SimElement) -> Result<Self>;
}

impl GroupElement for SeElement {
    fn to_sim(&self) -> SimElement {
        SeElement::to_sim(self)
    }
    fn from_sim(s: SimElement) -> Result<Self> {
        s.into_se()
    }
}

impl GroupElement for SimElement {
    fn to_sim(&self) -> SimElement {
        self.clone()
    }
    fn from_sim(s: SimElement) -> Result<Self> {
        Ok(s)
    }
}

/// Element `(Omega, W)` of `se_{n+2}(3)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeTangent {
    pub omega: Vec3,
    pub w: Mat3xX,
}

impl SeTangent {
    pub fn zero(n: usize) -> Self {
        Self {
            omega: Vec3::zeros(),
            w: Mat3xX::zeros(n + 2),
        }
    }

    pub fn cols(&self) -> usize {
        self.w.ncols()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        SimTangent::from(self.clone()).to_matrix()
    }

    /// `exp(dt * self)` in closed form: `(exp(hat(phi)), J(phi) W dt)` with `phi = Omega dt`.
    pub fn exp(&self, dt: f64) -> SeElement {
        let phi = self.omega * dt;
        let rot = so3_exp(&phi, 1.0);
        let (j1, _) = so3_jacobians(&phi);
        SeElement {
            rot,
            v: j1 * &self.w * dt,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.omega
            .iter()
            .chain(self.w.iter())
            .all(|x| x.is_finite())
    }
}

impl std::ops::Add for &SeTangent {
    type Output = SeTangent;
    fn add(self, rhs: &SeTangent) -> SeTangent {
        SeTangent {
            omega: self.omega + rhs.omega,
            w: &self.w + &rhs.w,
        }
    }
}

/// Element `(Omega, W, S)` of `sim_{n+2}(3)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimTangent {
    pub omega: Vec3,
    pub w: Mat3xX,
    pub s: DMatrix<f64>,
}

impl From<SeTangent> for SimTangent {
    fn from(t: SeTangent) -> Self {
        let m = t.w.ncols();
        Self {
            omega: t.omega,
            w: t.w,
            s: DMatrix::zeros(m, m),
        }
    }
}

impl SimTangent {
    pub fn zero(n: usize) -> Self {
        Self {
            omega: Vec3::zeros(),
            w: Mat3xX::zeros(n + 2),
            s: DMatrix::zeros(n + 2, n + 2),
        }
    }

    pub fn cols(&self) -> usize {
        self.w.ncols()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let m = self.w.ncols();
        let mut out = DMatrix::zeros(m + 3, m + 3);
        out.view_mut((0, 0), (3, 3)).copy_from(&hat(&self.omega));
        out.view_mut((0, 3), (3, m)).copy_from(&self.w);
        out.view_mut((3, 3), (m, m)).copy_from(&self.s);
        out
    }

    /// Reads an `(n+5) x (n+5)` matrix whose lower-left block vanishes.
    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() < 5 {
            return Err(Error::DimensionMismatch {
                expected: "square embedding of size >= 5".into(),
                found: format!("{} x {}", m.nrows(), m.ncols()),
            });
        }
        let k = m.nrows() - 3;
        let lower_left = m.view((3, 0), (k, 3)).amax();
        if lower_left > AXIOM_TOL {
            return Err(Error::NotInGroup(format!(
                "tangent lower-left block has magnitude {lower_left:e}"
            )));
        }
        Ok(Self {
            omega: vee(&m.fixed_view::<3, 3>(0, 0).into_owned())?,
            w: m.generic_view((0, 3), (U3, Dyn(k))).into_owned(),
            s: m.view((3, 3), (k, k)).into_owned(),
        })
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            omega: self.omega * c,
            w: &self.w * c,
            s: &self.s * c,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.omega
            .iter()
            .chain(self.w.iter())
            .chain(self.s.iter())
            .all(|x| x.is_finite())
    }

    /// `exp(dt * self)`.
    ///
    /// When `S^2 = 0` the exponential is closed form,
    /// `(exp(hat(phi)), J1 W dt + J2 W S dt^2, I + S dt)`, which covers the
    /// gravity and velocity-coupling flows. With `Omega = 0` it is
    /// `(I, W dt phi1(S dt), exp(S dt))`. Other tangents go through the dense
    /// scaling-and-squaring exponential of the embedding.
    pub fn exp(&self, dt: f64) -> SimElement {
        let m = self.w.ncols();
        let s2_scale = self.s.amax().powi(2);
        let nilpotent = (&self.s * &self.s).amax() <= f64::EPSILON * s2_scale;
        if nilpotent {
            let phi = self.omega * dt;
            let rot = so3_exp(&phi, 1.0);
            let (j1, j2) = so3_jacobians(&phi);
            let v = j1 * &self.w * dt + j2 * &self.w * &self.s * (dt * dt);
            let a = DMatrix::identity(m, m) + &self.s * dt;
            return SimElement { rot, v, a };
        }
        if self.omega == Vec3::zeros() {
            let (a, phi1) = exp_and_phi1(&(&self.s * dt));
            return SimElement {
                rot: Rotation::identity(),
                v: &self.w * phi1 * dt,
                a,
            };
        }
        let e = (self.to_matrix() * dt).exp();
        SimElement {
            rot: Rotation(e.fixed_view::<3, 3>(0, 0).into_owned()),
            v: e.generic_view((0, 3), (U3, Dyn(m))).into_owned(),
            a: e.view((3, 3), (m, m)).into_owned(),
        }
    }
}

impl std::ops::Add for &SimTangent {
    type Output = SimTangent;
    fn add(self, rhs: &SimTangent) -> SimTangent {
        SimTangent {
            omega: self.omega + rhs.omega,
            w: &self.w + &rhs.w,
            s: &self.s + &rhs.s,
        }
    }
}

impl std::ops::Sub for &SimTangent {
    type Output = SimTangent;
    fn sub(self, rhs: &SimTangent) -> SimTangent {
        SimTangent {
            omega: self.omega - rhs.omega,
            w: &self.w - &rhs.w,
            s: &self.s - &rhs.s,
        }
    }
}

/// `(exp(x), phi1(x))` with `phi1(x) = sum_k x^k / (k+1)!`, by a Taylor series
/// on `x / 2^s` followed by `phi1(2y) = phi1(y) (exp(y) + I) / 2`, `exp(2y) = exp(y)^2`.
pub fn exp_and_phi1(x: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let m = x.nrows();
    let norm = x.column_iter().map(|c| c.lp_norm(1)).fold(0.0, f64::max);
    let squarings = if norm > 0.05 {
        (norm / 0.05).log2().ceil() as i32
    } else {
        0
    };
    let y = x / 2f64.powi(squarings);
    let id = DMatrix::identity(m, m);
    let mut e = id.clone();
    let mut phi = id.clone();
    let mut term = id.clone();
    // ||y|| <= 0.05 leaves a remainder below 0.05^11 / 11!; stop earlier once
    // terms no longer change the sums
    for k in 1..=10 {
        term = &term * &y / k as f64;
        e += &term;
        phi += &term / (k + 1) as f64;
        if term.amax() < 1e-3 * f64::EPSILON {
            break;
        }
    }
    for _ in 0..squarings {
        phi = &phi * (&e + &id) * 0.5;
        e = &e * &e;
    }
    (e, phi)
}

/// `exp(dt * left) * x * exp(dt * right)`.
pub fn mixed_euler_step<G: GroupElement>(
    x: &G,
    left: &SimTangent,
    right: &SimTangent,
    dt: f64,
) -> Result<G> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let x = x.to_sim();
    check_cols(x.v.ncols(), left.cols())?;
    check_cols(x.v.ncols(), right.cols())?;
    let out = left.exp(dt).compose(&x)?.compose(&right.exp(dt))?;
    out.rot.debug_check();
    G::from_sim(out)
}

/// Constant structure matrices of the lifted dynamics and measurements.
#[derive(Clone, Debug)]
pub struct ConstantMatrices {
    n: usize,
    gravity: f64,
    /// `(n+2) x n` landmark selector: rows `0_n^T`, `1_n^T`, `-I_n`.
    pub c: DMatrix<f64>,
    /// `(n+2) x 1` position selector `(0, 1, 0_n)`.
    pub cx: DVector<f64>,
    /// Nilpotent velocity coupling, `S_N[0][1] = -1`.
    pub s_n: DMatrix<f64>,
    /// Gravity block `(g e3, 0)`.
    pub w_g: Mat3xX,
}

impl ConstantMatrices {
    pub fn new(n: usize, gravity: f64) -> Self {
        let m = n + 2;
        let mut c = DMatrix::zeros(m, n);
        for j in 0..n {
            c[(1, j)] = 1.0;
            c[(j + 2, j)] = -1.0;
        }
        let mut cx = DVector::zeros(m);
        cx[1] = 1.0;
        let mut s_n = DMatrix::zeros(m, m);
        s_n[(0, 1)] = -1.0;
        let mut w_g = Mat3xX::zeros(m);
        w_g[(2, 0)] = gravity;
        Self {
            n,
            gravity,
            c,
            cx,
            s_n,
            w_g,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gravity_magnitude(&self) -> f64 {
        self.gravity
    }

    /// `G`, the gravity tangent.
    pub fn gravity(&self) -> SimTangent {
        SimTangent {
            omega: Vec3::zeros(),
            w: self.w_g.clone(),
            s: DMatrix::zeros(self.n + 2, self.n + 2),
        }
    }

    /// `N`, the velocity-coupling tangent.
    pub fn coupling(&self) -> SimTangent {
        SimTangent {
            omega: Vec3::zeros(),
            w: Mat3xX::zeros(self.n + 2),
            s: self.s_n.clone(),
        }
    }

    /// `G + N`.
    pub fn gravity_coupling(&self) -> SimTangent {
        SimTangent {
            omega: Vec3::zeros(),
            w: self.w_g.clone(),
            s: self.s_n.clone(),
        }
    }

    /// `U` for IMU readings `(Omega, a)`: `W_U = (a, 0)`.
    pub fn input(&self, omega: &Vec3, accel: &Vec3) -> SeTangent {
        let mut w = Mat3xX::zeros(self.n + 2);
        w.set_column(0, accel);
        SeTangent { omega: *omega, w }
    }

    /// `U - N`.
    pub fn input_minus_coupling(&self, omega: &Vec3, accel: &Vec3) -> SimTangent {
        let mut t = SimTangent::from(self.input(omega, accel));
        t.s = -&self.s_n;
        t
    }

    /// `1_n`.
    pub fn ones(&self) -> DVector<f64> {
        DVector::from_element(self.n, 1.0)
    }
}

/// Smallest singular value of a square matrix.
/// Smallest singular value, or NaN when the entries are not finite or the
/// decomposition does not converge.
pub fn min_singular_value(a: &DMatrix<f64>) -> f64 {
    if !a.iter().all(|x| x.is_finite()) {
        return f64::NAN;
    }
    a.clone()
        .try_svd(false, false, f64::EPSILON, 10_000)
        .map_or(f64::NAN, |svd| svd.singular_values.min())
}

/// Dense inverse guarded by [`MIN_SINGULAR_VALUE`].
pub fn checked_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let smin = min_singular_value(a);
    if !(smin > MIN_SINGULAR_VALUE) {
        return Err(Error::SingularAuxiliary {
            min_singular_value: smin,
        });
    }
    a.clone().try_inverse().ok_or(Error::SingularAuxiliary {
        min_singular_value: smin,
    })
}
