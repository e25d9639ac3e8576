use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use slam_observer::gains::{build_p0, check_gain_condition, p_bounds};
use slam_observer::harness::{run, RunConfig};
use slam_observer::selftest::run_selftest;
use slam_observer::system::TpeCriterion;
use slam_observer::Error;

/// Observer for GNSS- and magnetometer-aided landmark-inertial SLAM.
#[derive(Parser)]
#[command(name = "slam-observer", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write metrics.csv and summary.json.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Run even if the gain condition or the persistence check fails.
        #[arg(long)]
        allow_infeasible: bool,
    },
    /// Print the gain margin and the admissible intervals for P0.
    CheckGains {
        #[command(flatten)]
        common: Common,
    },
    /// Scan the GNSS schedule for persistence of excitation.
    ValidateSchedule {
        #[command(flatten)]
        common: Common,
    },
    /// Run the built-in invariant checks.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct Common {
    /// TOML scenario file; the circle scenario when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Step length in seconds.
    #[arg(long)]
    dt: Option<f64>,
    /// Simulated duration in seconds.
    #[arg(long)]
    horizon: Option<f64>,
    /// Log every this many steps (1 for full rate).
    #[arg(long)]
    log_interval: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_path(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(dt) = self.dt {
            cfg.dt = dt;
        }
        if let Some(h) = self.horizon {
            cfg.horizon = h;
        }
        if let Some(l) = self.log_interval {
            cfg.log_interval = l;
        }
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate {
            common,
            out,
            allow_infeasible,
        } => simulate(&common, &out, allow_infeasible),
        Command::CheckGains { common } => check_gains(&common),
        Command::ValidateSchedule { common } => validate_schedule(&common),
        Command::Selftest { seed } => Ok(selftest(seed)),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn simulate(common: &Common, out: &std::path::Path, allow_infeasible: bool) -> Result<bool, Error> {
    let cfg = common.load()?;
    let output = run(&cfg, allow_infeasible)?;
    let (csv, json) = output.write(out, cfg.system.landmarks.len())?;
    let s = &output.summary;
    let get = |k: &str| s.get(k).unwrap_or(f64::NAN);
    println!("steps             {}", get("steps"));
    println!("final att_err     {:.3e} rad", get("final_att_err"));
    println!("final vel_err     {:.3e} m/s", get("final_vel_err"));
    println!("final pos_err     {:.3e} m", get("final_pos_err"));
    println!("final lm_err_max  {:.3e} m", get("final_lm_err_max"));
    println!("max dL per step   {:.3e}", get("max_lyap_increase"));
    println!("min schur det     {:.3}", get("min_schur_det"));
    println!("P violations      {}", s.violations.len());
    println!("wrote {} and {}", csv.display(), json.display());

    let mut ok = s.violations.is_empty();
    if !cfg.noise.is_active() && get("max_lyap_increase") > 1e-6 {
        eprintln!("Lyapunov function increased by more than 1e-6 in one step");
        ok = false;
    }
    if !ok {
        eprintln!("run finished with failed checks");
    }
    Ok(ok)
}

fn check_gains(common: &Common) -> Result<bool, Error> {
    let cfg = common.load()?;
    let (_, gains) = cfg.schedule_and_gains()?;
    let n = cfg.system.landmarks.len();
    let c = check_gain_condition(&gains, n)?;
    let verdict = if c.feasible { "feasible" } else { "infeasible" };
    println!(
        "T={}, τ={}, n={n}, kx={}, kp={}, q={}",
        gains.tpe_period, gains.tpe_on, gains.kx, gains.kp, gains.q
    );
    println!("margin {:.3} ({:.6}): {verdict}", c.margin, c.margin);
    let b = p_bounds(&gains, n);
    let seeds = cfg.estimate.seeds.resolve(&gains, n);
    let mut ok = c.feasible;
    for (name, v, iv) in [
        ("s_x", seeds.s_x, b.s_x),
        ("s_vx", seeds.s_vx, b.s_vx),
        ("s_v", seeds.s_v, b.s_v),
    ] {
        let inside = iv.contains(v, 0.0);
        ok &= inside;
        println!(
            "{name:<5} [{:.6}, {:.6}]  initial {v}  {}",
            iv.lower,
            iv.upper,
            if inside { "ok" } else { "OUT OF RANGE" }
        );
    }
    println!("schur det lower bound {:.6}", b.schur_det_lower);
    if ok {
        if let Err(e) = build_p0(&gains, n, &seeds) {
            println!("P0: {e}");
            ok = false;
        }
    }
    Ok(ok)
}

fn validate_schedule(common: &Common) -> Result<bool, Error> {
    let cfg = common.load()?;
    let (schedule, _) = cfg.schedule_and_gains()?;
    let r = schedule.scan(cfg.horizon, TpeCriterion::OnMeasure);
    let verdict = if r.passed() { "yes" } else { "no" };
    println!("T={}, τ={}, TPE: {verdict}", r.period, r.on);
    println!(
        "worst window [{}, {}) has {} s of GNSS",
        r.worst_at,
        r.worst_at + r.period,
        r.worst_coverage
    );
    let c = schedule.scan(cfg.horizon, TpeCriterion::Contiguous);
    println!(
        "longest uninterrupted run in the worst window: {} s ({})",
        c.worst_coverage,
        if c.passed() {
            "contiguous form holds"
        } else {
            "contiguous form fails, informational"
        }
    );
    Ok(r.passed())
}

fn selftest(seed: u64) -> bool {
    let results = run_selftest(seed);
    let mut ok = true;
    for r in &results {
        println!(
            "{} {}: {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.detail
        );
        ok &= r.passed;
    }
    ok
}
