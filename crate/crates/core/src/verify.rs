//! The acceptance checks, shared by the `verify` command and the acceptance
//! test target. Each check reports a verdict, the measured quantities and
//! its wall time; a solver error counts as a failure with its message.

use std::time::{Duration, Instant};

use nalgebra::Vector3;

use crate::coupled::{energy_identity_residual, run_coupled, run_coupled_with, SimConfig, Trajectory};
use crate::cli_io::{ultra_profile_rows, UltraSettings};
use crate::error::Result;
use crate::fp_radial::{lq_norm, DensityState, Mode, RadialGrid, ThetaStepper};
use crate::geometry::{
    diffusion_matrix, lipschitz_ratios, noise_matrix, sweep_points, AppendixRatios, FieldValue,
    APPENDIX_CONSTANTS, LIPSCHITZ_CONSTANTS,
};
use crate::nordstrom::FieldTrajectory;
use crate::profile::Profile;
use crate::quad::{integrate, QuadOptions};
use crate::sde_mc::{feynman_kac_estimate, McEstimate, PathConfig};
use crate::specialfn::{bessel_i, BesselOrder};
use crate::ultra_exact::{exponential_closed_form, kernel_q_moment, ultra_solution, verify_asymptotic_bound, SupSample};

/// Lower bound for the volume of `{f > eps}` along the reference run, with
/// `eps` half the final peak. The observed minimum is 11.9937 (t = 0.729);
/// the floor sits about one cell shell below it.
pub const NONVANISHING_FLOOR: f64 = 11.5;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl CheckOutcome {
    pub fn line(&self) -> String {
        format!(
            "{} [{:>2}] {} ({:.2} s): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.elapsed.as_secs_f64(),
            self.detail
        )
    }
}

pub const CHECK_NAMES: [&str; 10] = [
    "ultra-relativistic profiles",
    "mass conservation",
    "energy identity",
    "field asymptotics",
    "non-vanishing",
    "asymptotic profile bound",
    "oracle triangle",
    "geometry certification",
    "Bessel certification",
    "L^gamma non-expansion",
];

/// Wall-time ceilings, where a check has one.
fn time_limit(id: u32) -> Option<Duration> {
    match id {
        1 => Some(Duration::from_secs(10)),
        2 => Some(Duration::from_secs(120)),
        7 => Some(Duration::from_secs(300)),
        8 => Some(Duration::from_secs(5)),
        _ => None,
    }
}

/// Runs the checks in `ids` (all when empty), in order.
pub fn run_checks(ids: &[u32]) -> Vec<CheckOutcome> {
    let wanted = |id: u32| ids.is_empty() || ids.contains(&id);
    let mut reference: Option<(std::result::Result<Trajectory, String>, Duration)> = None;
    let mut out = Vec::new();
    for id in 1..=10u32 {
        if !wanted(id) {
            continue;
        }
        let start = Instant::now();
        let verdict: Result<(bool, String)> = match id {
            1 => check_ultra_profiles(),
            2..=5 => {
                let (traj, run_time) = reference.get_or_insert_with(|| {
                    let t0 = Instant::now();
                    (run_coupled(&SimConfig::reference()).map_err(|e| e.to_string()), t0.elapsed())
                });
                match traj {
                    Err(e) => Ok((false, format!("reference run failed: {e}"))),
                    Ok(traj) => match id {
                        2 => Ok(check_mass(traj, *run_time)),
                        3 => check_energy(traj),
                        4 => Ok(check_field(traj)),
                        _ => check_nonvanishing(traj),
                    },
                }
            }
            6 => check_asymptotic_bound(),
            7 => check_oracle_triangle(),
            8 => Ok(check_geometry()),
            9 => check_bessel(),
            _ => check_non_expansion(),
        };
        // The shared reference run is charged to the first check that asks for it.
        let elapsed = start.elapsed();
        let (mut passed, mut detail) = verdict.unwrap_or_else(|e| (false, format!("error: {e}")));
        if let Some(limit) = time_limit(id) {
            if elapsed > limit {
                passed = false;
                detail.push_str(&format!("; exceeded time limit of {} s", limit.as_secs()));
            }
        }
        out.push(CheckOutcome { id, name: CHECK_NAMES[id as usize - 1], passed, detail, elapsed });
    }
    out
}

/// Exact solution from `e^{-q}` by kernel quadrature against the closed
/// form, which is itself checked against a quadrature with the unscaled
/// Bessel function; near the origin the curves must decrease with time.
fn check_ultra_profiles() -> Result<(bool, String)> {
    let settings = UltraSettings { times: vec![0.1, 0.2, 0.3, 0.4, 0.5], q_min: 0.01, q_max: 10.0, n_points: 200 };
    let rows = ultra_profile_rows(&Profile::exp(), &settings)?;
    let worst = rows
        .iter()
        .map(|&(t, q, f)| ((f - exponential_closed_form(1.0, 1.0, t, q)) / f).abs())
        .fold(0.0, f64::max);
    let mut raw_worst = 0.0f64;
    for &t in &settings.times {
        for q in [0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0] {
            let exact = exponential_closed_form(1.0, 1.0, t, q);
            raw_worst = raw_worst.max(((unscaled_kernel_solution(t, q)? - exact) / exact).abs());
        }
    }
    // Adjacent curves cross at q ~ 3(1+s)(1+t) > 3.4; the caption's order
    // (t = 0.1 on top) holds below that.
    let n = settings.n_points;
    let ordered = rows.chunks(n).collect::<Vec<_>>().windows(2).all(|w| {
        w[0].iter().zip(w[1]).filter(|(a, _)| a.1 <= 3.0).all(|(a, b)| a.2 > b.2)
    });
    let passed = worst <= 1e-8 && raw_worst <= 1e-10 && ordered && rows.len() == 5 * n;
    Ok((
        passed,
        format!("max rel err vs closed form {worst:.2e} (<= 1e-8); closed form vs unscaled quadrature {raw_worst:.2e} (<= 1e-10); t=0.1 top to t=0.5 bottom on q <= 3: {ordered}"),
    ))
}

/// `e^{-q/t}/(t q) \int e^{-z} z e^{-z/t} I_2(2 sqrt(q z)/t) dz`, with the
/// plain exponentially growing Bessel function.
fn unscaled_kernel_solution(t: f64, q: f64) -> Result<f64> {
    let f = |z: f64| {
        let x = 2.0 * (q * z).sqrt() / t;
        (-z).exp() * z * (-z / t).exp() * bessel_i(BesselOrder::TWO, x).unwrap_or(f64::NAN)
    };
    let hi = 60.0f64.min(700.0f64.powi(2) * t * t / (4.0 * q));
    let breaks: Vec<f64> = (1..60).map(|k| k as f64 * hi / 60.0).collect();
    let opts = QuadOptions { rel_tol: 1e-13, ..Default::default() };
    Ok((-q / t).exp() / (t * q) * integrate(f, 0.0, hi, &breaks, opts)?.value)
}

fn check_mass(traj: &Trajectory, run_time: Duration) -> (bool, String) {
    let drift = traj.max_relative_mass_drift();
    let steps = traj.field.states.len() - 1;
    (
        drift <= 1e-10 && steps == 20_000,
        format!("max relative mass drift {drift:.2e} over {steps} steps (<= 1e-10); reference run {:.2} s", run_time.as_secs_f64()),
    )
}

fn check_energy(traj: &Trajectory) -> Result<(bool, String)> {
    let fine = energy_identity_residual(traj);
    let coarse_cfg = |k: usize| SimConfig {
        n_cells: traj.config.n_cells / k,
        dt: traj.config.dt * k as f64,
        ..traj.config.clone()
    };
    let mid = energy_identity_residual(&run_coupled(&coarse_cfg(2))?);
    let coarse = energy_identity_residual(&run_coupled(&coarse_cfg(4))?);
    let (r1, r2) = (coarse / mid, mid / fine);
    // Factor four per refinement, i.e. observed order 2 within 10%.
    let ok_ratio = |r: f64| (4.0 * 0.9..=4.0 * 1.1).contains(&r);
    Ok((
        fine <= 1e-5 && ok_ratio(r1) && ok_ratio(r2),
        format!(
            "residual {fine:.3e} at n=2000, dt=1e-3 (<= 1e-5); residuals {coarse:.3e}, {mid:.3e}, {fine:.3e} under x2 refinement, ratios {r1:.3}, {r2:.3} (4 +- 10%)"
        ),
    ))
}

fn check_field(traj: &Trajectory) -> (bool, String) {
    let states = &traj.field.states;
    let sign_ok = states.iter().all(|s| s.accel <= 0.0);
    let report = traj.field_bounds().check(&traj.field);
    let envelope_ok = !report.violations.iter().any(|v| v.bound == "linear_envelope");
    let tau10 = traj.field.tau_at(10.0).unwrap_or(f64::NAN);
    // Summed over the tail directly; the difference of the running
    // integrals would be lost to round-off.
    let tail: f64 = states
        .windows(2)
        .filter(|w| w[0].t >= 10.0 - 1e-9)
        .map(|w| 0.5 * (w[1].t - w[0].t) * ((2.0 * w[0].phi).exp() + (2.0 * w[1].phi).exp()))
        .sum();
    let t0 = report.t0_crossing;
    let passed = sign_ok && t0.is_some() && envelope_ok && tail <= 1e-3 * tau10 && report.ok();
    let envelope_margin = report
        .min_margins
        .iter()
        .find(|(n, _)| n == "linear_envelope")
        .map_or(f64::NAN, |m| m.1);
    (
        passed,
        format!(
            "phi'' <= 0 at all {} samples: {sign_ok}; phidot < 0 from t0 = {}; min margin under linear envelope {envelope_margin:.3e}; tau(20) - tau(10) = {tail:.3e} vs 1e-3 tau(10) = {:.3e}; other field bounds hold: {}",
            states.len(),
            t0.map_or("none".to_string(), |t| format!("{t:.4}")),
            1e-3 * tau10,
            report.ok()
        ),
    )
}

fn check_nonvanishing(traj: &Trajectory) -> Result<(bool, String)> {
    let peak = traj.final_density.values.iter().copied().fold(0.0, f64::max);
    let eps = 0.5 * peak;
    let cfg = SimConfig { nonvanish_eps: eps, diagnostics_every: 1, ..traj.config.clone() };
    let mut min = (f64::INFINITY, 0.0);
    run_coupled_with(&cfg, |d, _| {
        if d.nonvanishing_measure < min.0 {
            min = (d.nonvanishing_measure, d.t);
        }
    })?;
    Ok((
        min.0 >= NONVANISHING_FLOOR && NONVANISHING_FLOOR > 0.0,
        format!(
            "eps = {eps:.6} (half the final peak {peak:.6}); min over every step of |{{f > eps}}| = {:.6} at t = {:.3} (floor {NONVANISHING_FLOOR})",
            min.0, min.1
        ),
    ))
}

fn check_asymptotic_bound() -> Result<(bool, String)> {
    let traj = FieldTrajectory::from_fn(|t| -t / 2.0, 40.0, 0.01)?;
    let report = verify_asymptotic_bound(&Profile::exp(), &traj, &[2.0, 4.0, 8.0, 16.0], SupSample::default())?;
    let ratios: Vec<String> = report.rows.iter().map(|r| format!("{:.4}", r.ratio)).collect();
    Ok((
        report.bounded_by(10.0),
        format!("ratios at t = 2, 4, 8, 16: [{}]; max/min spread {:.3} (<= 10)", ratios.join(", "), report.spread),
    ))
}

/// Grid value at `q` after `steps` steps on `uniform(30, n)` with `phi = 0`.
fn grid_value(mode: Mode, n: usize, steps: usize, t: f64, q: f64) -> Result<f64> {
    let grid = RadialGrid::uniform(30.0, n)?;
    let mut f = DensityState::from_profile(&grid, &Profile::exp());
    let mut stepper = ThetaStepper::new(0.5, mode, 1.0)?;
    let fv = FieldValue::new(0.0);
    for _ in 0..steps {
        stepper.step(&grid, &mut f.values, &fv, t / steps as f64)?;
    }
    Ok(f.value_at(&grid, q))
}

fn check_oracle_triangle() -> Result<(bool, String)> {
    let (t, q) = (0.2, 1.0);
    let traj = FieldTrajectory::from_fn(|_| 0.0, t, 1e-3)?;
    let mut passed = true;
    let mut parts = Vec::new();
    for mode in [Mode::Relativistic, Mode::Ultra] {
        let coarse = grid_value(mode, 3000, 200, t, q)?;
        let fine = grid_value(mode, 6000, 400, t, q)?;
        let grid_err = (coarse - fine).abs();
        let cfg = PathConfig { n_paths: 200_000, dt: 1e-3, seed: 20_240_601, antithetic: true, mode };
        let McEstimate { mean, std_error, .. } = feynman_kac_estimate(&Profile::exp(), Vector3::new(0.0, 0.0, q), t, &traj, &cfg)?;
        let tol = (3.0 * std_error).max(2.0 * grid_err);
        let mut pairs = vec![("grid", coarse, "mc", mean)];
        if mode == Mode::Ultra {
            let exact = ultra_solution(&Profile::exp(), t, q)?;
            pairs.push(("grid", coarse, "exact", exact));
            pairs.push(("mc", mean, "exact", exact));
        }
        let mut diffs = Vec::new();
        for (a, va, b, vb) in pairs {
            let d = (va - vb).abs();
            passed &= d <= tol;
            diffs.push(format!("|{a}-{b}| = {d:.2e}"));
        }
        parts.push(format!(
            "{mode}: grid {coarse:.6} (err est {grid_err:.1e}), mc {mean:.6} +- {std_error:.1e}, tol {tol:.2e}, {}",
            diffs.join(", ")
        ));
    }
    Ok((passed, parts.join("; ")))
}

fn check_geometry() -> (bool, String) {
    let pts = sweep_points(100, 100, (-10.0, 2.0), 100.0);
    let mut worst_gg = 0.0f64;
    let mut worst = AppendixRatios::default();
    let mut lip = (0.0f64, 0.0f64);
    for (fv, mp) in &pts {
        let g = noise_matrix(fv, mp);
        let target = diffusion_matrix(fv, mp) * (2.0 * fv.exp2phi());
        worst_gg = worst_gg.max((g * g.transpose() - target).amax() / target.amax());
        worst = worst.max(AppendixRatios::at(fv, mp));
        let (a, b) = lipschitz_ratios(fv.phi(), fv.phi() - 0.75, mp);
        lip = (lip.0.max(a), lip.1.max(b));
    }
    let mut failed: Vec<&str> = worst
        .entries()
        .iter()
        .zip(APPENDIX_CONSTANTS.entries())
        .filter(|((_, v), (_, c))| v > c)
        .map(|((n, _), _)| *n)
        .collect();
    if lip.0 > LIPSCHITZ_CONSTANTS.0 || lip.1 > LIPSCHITZ_CONSTANTS.1 {
        failed.push("field Lipschitz bounds");
    }
    let passed = worst_gg <= 1e-12 && failed.is_empty() && pts.len() == 10_000;
    (
        passed,
        format!(
            "{} points; max |GG^T - 2e^(2phi)D| / |2e^(2phi)D| = {worst_gg:.2e} (<= 1e-12); {} of 10 estimates hold with frozen constants{}",
            pts.len(),
            10 - failed.len().min(10),
            if failed.is_empty() { String::new() } else { format!("; violated: {}", failed.join(", ")) }
        ),
    )
}

fn check_bessel() -> Result<(bool, String)> {
    let i1 = |y: f64| bessel_i(BesselOrder::ONE, y);
    let i2 = |y: f64| bessel_i(BesselOrder::TWO, y);
    let mut recurrence_ok = 0;
    let mut worst_fd = 0.0f64;
    for i in 0..50 {
        let x = 1e-3 * (1e5_f64).powf(f64::from(i) / 49.0);
        let h = 1e-4 * x.max(1e-2);
        let fd = (i2(x + h)? - i2(x - h)?) / (2.0 * h);
        let exact = i1(x)? - 2.0 / x * i2(x)?;
        // Truncation h^2/6 |I_2'''| <= h^2 (I_1 + I_2)(x + h), plus round-off.
        let bound = h * h * (i2(x + h)? + i1(x + h)?) + 1e-14 * i2(x + h)? / h;
        if (fd - exact).abs() <= bound.max(1e-300) {
            recurrence_ok += 1;
        }
        worst_fd = worst_fd.max((fd - exact).abs() / bound.max(1e-300));
    }
    let mut worst_norm = 0.0f64;
    let mut n_pairs = 0;
    for t in [0.02, 0.1, 0.5, 2.0, 5.0] {
        for z in [0.01, 0.5, 3.0, 20.0] {
            let m = kernel_q_moment(t, z)?;
            worst_norm = worst_norm.max(((m - z) / z).abs());
            n_pairs += 1;
        }
    }
    Ok((
        recurrence_ok == 50 && worst_norm <= 1e-8 && n_pairs == 20,
        format!(
            "I_2' = I_1 - (2/x) I_2 within the FD bound at {recurrence_ok}/50 points (worst |err|/bound {worst_fd:.2e}); normalisation identity over {n_pairs} (t, z) pairs, max rel err {worst_norm:.2e} (<= 1e-8)"
        ),
    ))
}

fn check_non_expansion() -> Result<(bool, String)> {
    let mut passed = true;
    let mut parts = Vec::new();
    for mode in [Mode::Relativistic, Mode::Ultra] {
        let cfg = SimConfig { theta: 1.0, mode, diagnostics_every: 1, snapshot_every: 20_000, ..SimConfig::reference() };
        let grid = cfg.grid()?;
        let mut prev: Option<(f64, f64)> = None;
        let mut worst = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut steps = 0usize;
        run_coupled_with(&cfg, |_, f| {
            let now = (lq_norm(&f.values, &grid, 2.0), lq_norm(&f.values, &grid, 4.0));
            if let Some(p) = prev {
                worst.0 = worst.0.max((now.0 - p.0) / p.0);
                worst.1 = worst.1.max((now.1 - p.1) / p.1);
                steps += 1;
            }
            prev = Some(now);
        })?;
        let ok = worst.0 <= 1e-10 && worst.1 <= 1e-10;
        passed &= ok;
        parts.push(format!("{mode}: max relative step increase L2 {:.2e}, L4 {:.2e} over {steps} steps", worst.0, worst.1));
    }
    Ok((passed, format!("{} (<= 1e-10)", parts.join("; "))))
}
