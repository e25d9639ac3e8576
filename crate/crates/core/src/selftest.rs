//! Fast invariant checks, runnable from the command line.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::gains::check_gain_condition;
use crate::harness::{run, RunConfig};
use crate::lie::{Mat3xX, Rotation, SeElement, SeTangent, Vec3};
use crate::observer::{
    apply_correction, bounds, compute_corrections, compute_error, lyapunov, lyapunov_rate, Gains,
    ObserverState, TangentCorrection,
};
use crate::system::{
    propagate_truth, GnssSchedule, ImuInput, MeasurementBundle, SystemParams, TpeCriterion,
};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name,
        passed,
        detail,
    }
}

fn gauss3(rng: &mut ChaCha8Rng) -> Vec3 {
    Vec3::from_fn(|_, _| StandardNormal.sample(rng))
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation {
    let axis = gauss3(rng).normalize();
    Rotation::from_axis_angle(&axis, rng.random_range(0.0..3.0))
}

fn random_se(rng: &mut ChaCha8Rng, n: usize) -> SeElement {
    let lms: Vec<Vec3> = (0..n).map(|_| gauss3(rng)).collect();
    SeElement::from_parts(random_rotation(rng), gauss3(rng), gauss3(rng), &lms)
}

fn random_observer(rng: &mut ChaCha8Rng, n: usize) -> ObserverState {
    let m = n + 2;
    let az = DMatrix::from_fn(m, m, |i, j| {
        let z: f64 = StandardNormal.sample(rng);
        if i == j {
            2.0 + z.abs()
        } else {
            0.3 * z
        }
    });
    let vz = Mat3xX::from_fn(m, |_, _| StandardNormal.sample(rng));
    ObserverState::new(random_se(rng, n), vz, az).expect("diagonally dominant A_Z")
}

fn group_axioms(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (a, b, c) = (random_se(rng, 3), random_se(rng, 3), random_se(rng, 3));
        let ab = a.compose(&b).unwrap();
        let left = ab.compose(&c).unwrap().to_matrix();
        let right = a.compose(&b.compose(&c).unwrap()).unwrap().to_matrix();
        worst = worst.max((left - right).amax());
        let dense = a.to_matrix() * b.to_matrix();
        worst = worst.max((ab.to_matrix() - dense).amax());
        let id = a.compose(&a.inverse()).unwrap().to_matrix();
        worst = worst.max((id - DMatrix::identity(8, 8)).amax());
    }
    check(
        "group axioms",
        worst < 1e-11,
        format!("max deviation {worst:.3e}"),
    )
}

fn exponential(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let xi = SeTangent {
            omega: gauss3(rng),
            w: Mat3xX::from_fn(5, |_, _| StandardNormal.sample(rng)),
        };
        let dt = rng.random_range(1e-4..1.0);
        let closed = xi.exp(dt).to_matrix();
        let dense = (xi.to_matrix() * dt).exp();
        worst = worst.max((closed - dense).amax());
    }
    check(
        "closed-form exponential",
        worst < 1e-9,
        format!("max deviation {worst:.3e}"),
    )
}

fn synchrony(rng: &mut ChaCha8Rng, params: &SystemParams) -> CheckResult {
    let consts = params.constants();
    let n = params.n();
    let dt = 1e-3;
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let u = ImuInput {
            omega: gauss3(rng),
            accel: gauss3(rng) * 5.0,
        };
        let mut truth = random_se(rng, n);
        let mut obs = random_observer(rng, n);
        let e0 = compute_error(&truth, &obs);
        let zero = TangentCorrection::zero(n);
        for _ in 0..1000 {
            obs = apply_correction(&obs, &u, &zero, &consts, dt).unwrap();
            truth = propagate_truth(&truth, &u, &consts, dt).unwrap();
        }
        let e1 = compute_error(&truth, &obs);
        let d = (e1.re.matrix() - e0.re.matrix())
            .amax()
            .max((&e1.ve - &e0.ve).amax());
        worst = worst.max(d);
    }
    check(
        "synchrony",
        worst < 1e-6,
        format!("max error drift {worst:.3e} over 1 s"),
    )
}

/// Forward-difference Lyapunov rate with one Richardson extrapolation.
fn fd_rate(
    truth: &SeElement,
    obs: &ObserverState,
    corr: &TangentCorrection,
    params: &SystemParams,
    h: f64,
) -> f64 {
    let consts = params.constants();
    let u = ImuInput {
        omega: Vec3::zeros(),
        accel: Vec3::zeros(),
    };
    let l0 = lyapunov(&compute_error(truth, obs));
    let after = |h: f64| {
        let o = apply_correction(obs, &u, corr, &consts, h).unwrap();
        let t = propagate_truth(truth, &u, &consts, h).unwrap();
        lyapunov(&compute_error(&t, &o))
    };
    let d1 = (after(h) - l0) / h;
    let d2 = (after(h / 2.0) - l0) / (h / 2.0);
    2.0 * d2 - d1
}

fn lemma_bounds(rng: &mut ChaCha8Rng, params: &SystemParams, gains: &Gains) -> [CheckResult; 2] {
    let consts = params.constants();
    let n = params.n();
    let sched = GnssSchedule::default_periodic();
    let mut excess = f64::NEG_INFINITY;
    let mut fd_gap: f64 = 0.0;
    let mut linearity: f64 = 0.0;
    for k in 0..300 {
        let truth = random_se(rng, n);
        let obs = random_observer(rng, n);
        let t = if k % 2 == 0 { 6.0 } else { 1.0 };
        let meas = MeasurementBundle::measure(&truth, params, &sched, t);
        let parts = compute_corrections(&obs, &meas, gains, params, &consts).unwrap();
        let err = compute_error(&truth, &obs);
        let bound = [
            bounds::gnss(&err, &obs, &meas.gnss, meas.sigma, gains, &consts).unwrap(),
            bounds::landmark(&err, &obs, gains, &consts).unwrap(),
            bounds::magnetometer(&err, gains, params),
        ];
        let mut sum = 0.0;
        for (c, b) in [&parts.gnss, &parts.landmark, &parts.magnetometer]
            .into_iter()
            .zip(bound)
        {
            let rate = lyapunov_rate(&err, c);
            let fd = fd_rate(&truth, &obs, c, params, 1e-6);
            sum += rate;
            excess = excess.max(fd - b);
            fd_gap = fd_gap.max((fd - rate).abs() / (1.0 + rate.abs()));
        }
        let total = lyapunov_rate(&err, &parts.total());
        linearity = linearity.max((total - sum).abs() / (1.0 + total.abs()));
    }
    [
        check(
            "lyapunov rate bounds",
            excess <= 1e-4 && fd_gap < 1e-4,
            format!("max rate minus bound {excess:.3e}, finite-difference gap {fd_gap:.3e}"),
        ),
        check(
            "correction linearity",
            linearity < 1e-9,
            format!("max relative gap {linearity:.3e}"),
        ),
    ]
}

fn gain_margin(gains: &Gains) -> CheckResult {
    match check_gain_condition(gains, 5) {
        Ok(c) => check(
            "reference gain margin",
            c.feasible && (c.margin - 0.390).abs() < 1e-3,
            format!("margin {:.6}", c.margin),
        ),
        Err(e) => check("reference gain margin", false, e.to_string()),
    }
}

fn schedule_scan() -> CheckResult {
    let r = GnssSchedule::default_periodic().scan(40.0, TpeCriterion::OnMeasure);
    check(
        "reference schedule persistence",
        r.passed(),
        format!(
            "T={}, tau={}, worst window coverage {} at t={}",
            r.period, r.on, r.worst_coverage, r.worst_at
        ),
    )
}

fn short_reference_run() -> CheckResult {
    let cfg = RunConfig {
        horizon: 2.0,
        ..RunConfig::default()
    };
    match run(&cfg, false) {
        Ok(out) => {
            let inc = out.summary.get("max_lyap_increase").unwrap_or(f64::NAN);
            let viol = out.summary.violations.len();
            check(
                "reference run, first 2 s",
                inc <= 1e-6 && viol == 0,
                format!("max Lyapunov increase {inc:.3e}, {viol} P-bound violations"),
            )
        }
        Err(e) => check("reference run, first 2 s", false, e.to_string()),
    }
}

/// Runs every check with a fixed seed.
pub fn run_selftest(seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = SystemParams::new(
        9.81,
        Vec3::x(),
        vec![
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 2.0, 0.0),
            Vec3::new(-1.0, 0.5, 1.0),
        ],
    )
    .expect("valid parameters");
    let gains = Gains::default();
    let mut out = vec![
        group_axioms(&mut rng),
        exponential(&mut rng),
        synchrony(&mut rng, &params),
    ];
    out.extend(lemma_bounds(&mut rng, &params, &gains));
    out.push(gain_margin(&gains));
    out.push(schedule_scan());
    out.push(short_reference_run());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for r in run_selftest(1) {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
