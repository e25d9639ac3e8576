#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use slam_observer::observer::{apply_correction, TangentCorrection};
use slam_observer::system::{measure_landmarks, propagate_truth};
use slam_observer::{
    ConstantMatrices, ImuInput, Mat3xX, MeasurementBundle, ObserverState, Rotation, SeElement,
    SystemParams, Vec3,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn vec3(rng: &mut ChaCha8Rng) -> Vec3 {
    Vec3::from_fn(|_, _| gauss(rng))
}

pub fn mat3xx(rng: &mut ChaCha8Rng, cols: usize) -> Mat3xX {
    Mat3xX::from_fn(cols, |_, _| gauss(rng))
}

/// Uniform on SO(3), via a normalized Gaussian quaternion.
pub fn rotation(rng: &mut ChaCha8Rng) -> Rotation {
    let q = nalgebra::Quaternion::new(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
    let u = nalgebra::UnitQuaternion::from_quaternion(q);
    Rotation::from_matrix(*u.to_rotation_matrix().matrix()).unwrap()
}

pub fn se(rng: &mut ChaCha8Rng, n: usize) -> SeElement {
    let lms: Vec<Vec3> = (0..n).map(|_| vec3(rng)).collect();
    SeElement::from_parts(rotation(rng), vec3(rng), vec3(rng), &lms)
}

/// Well-conditioned random square matrix: orthogonal times positive diagonal.
pub fn scaling(rng: &mut ChaCha8Rng, m: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(m, m, |_, _| gauss(rng));
    let q = g.qr().q();
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(m, |_, _| {
        rng.random_range(0.5..4.0)
    }));
    let h = DMatrix::from_fn(m, m, |_, _| gauss(rng)).qr().q();
    q * d * h
}

pub fn observer(rng: &mut ChaCha8Rng, n: usize) -> ObserverState {
    let m = n + 2;
    ObserverState::new(se(rng, n), mat3xx(rng, m), scaling(rng, m)).unwrap()
}

/// `exp(a)` by scaling and squaring with a long Taylor series.
pub fn expm_taylor(a: &DMatrix<f64>) -> DMatrix<f64> {
    let norm = a.abs().row_sum().max();
    let s = if norm > 0.25 {
        (norm / 0.25).log2().ceil() as i32
    } else {
        0
    };
    let b = a / 2f64.powi(s);
    let k = a.nrows();
    let mut term = DMatrix::identity(k, k);
    let mut sum = DMatrix::identity(k, k);
    for i in 1..30 {
        term = &term * &b / i as f64;
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

pub const N: usize = 5;

pub fn params(rng: &mut ChaCha8Rng) -> SystemParams {
    let lms = (0..N).map(|_| vec3(rng)).collect();
    SystemParams::new(9.81, vec3(rng), lms).unwrap()
}

/// `|V_E|^2 + tr(I - R_E)` from the dense product `Z^{-1} X X_hat^{-1} Z`.
pub fn dense_lyapunov(truth: &SeElement, obs: &ObserverState) -> f64 {
    let z = obs.z().to_matrix();
    let e = z.clone().try_inverse().unwrap()
        * truth.to_matrix()
        * obs.estimate().to_matrix().try_inverse().unwrap()
        * z;
    let m = e.ncols();
    let ve = e.view((0, 3), (3, m - 3));
    ve.norm_squared() + 3.0 - e.view((0, 0), (3, 3)).trace()
}

pub fn imu(rng: &mut ChaCha8Rng) -> ImuInput {
    ImuInput {
        omega: vec3(rng),
        accel: vec3(rng) * 5.0,
    }
}

/// Forward differences at `h = 1e-4, 3e-5, 1e-5`, extrapolated to `h = 0` by
/// Neville's scheme, cancelling the `h` and `h^2` error terms.
pub fn fd_rate(
    truth: &SeElement,
    obs: &ObserverState,
    corr: &TangentCorrection,
    consts: &ConstantMatrices,
    u: &ImuInput,
) -> f64 {
    const STEPS: [f64; 3] = [1e-4, 3e-5, 1e-5];
    let l0 = dense_lyapunov(truth, obs);
    let mut t: Vec<f64> = STEPS
        .iter()
        .map(|&h| {
            let o = apply_correction(obs, u, corr, consts, h).unwrap();
            let x = propagate_truth(truth, u, consts, h).unwrap();
            (dense_lyapunov(&x, &o) - l0) / h
        })
        .collect();
    for k in 1..STEPS.len() {
        t = (0..t.len() - 1)
            .map(|i| {
                let r = STEPS[i] / STEPS[i + k];
                (r * t[i + 1] - t[i]) / (r - 1.0)
            })
            .collect();
    }
    t[0]
}

/// Random truth, observer, readings and input; GNSS available half the time.
pub struct Sample {
    pub truth: SeElement,
    pub obs: ObserverState,
    pub params: SystemParams,
    pub consts: ConstantMatrices,
    pub meas: MeasurementBundle,
    pub u: ImuInput,
}

pub fn sample(rng: &mut ChaCha8Rng) -> Sample {
    let params = params(rng);
    let consts = params.constants();
    let truth = se(rng, N);
    let obs = observer(rng, N);
    let sigma = rng.random_bool(0.5);
    let meas = MeasurementBundle {
        landmarks: measure_landmarks(&truth),
        magnetometer: truth.rotation().matrix().transpose() * params.mag_reference,
        gnss: if sigma {
            truth.position()
        } else {
            Vec3::zeros()
        },
        sigma,
    };
    let u = imu(rng);
    Sample {
        truth,
        obs,
        params,
        consts,
        meas,
        u,
    }
}
