//! Long coupled runs at the reference resolution.

use vnfp_core::coupled::{run_coupled, SimConfig, Trajectory};
use vnfp_core::fp_radial::{weighted_moment, DensityState, Mode, RadialGrid, ThetaStepper};
use vnfp_core::geometry::FieldValue;
use vnfp_core::profile::Profile;
use vnfp_core::ultra_exact::{asymptotic_profile, time_change};

fn final_diagnostics(traj: &Trajectory) -> [f64; 4] {
    let s = traj.field.last().unwrap();
    let d = traj.diagnostics.last().unwrap();
    [s.phi, s.phidot, d.energy, d.first_abs_moment]
}

#[test]
fn diagnostics_converge_at_second_order_under_joint_refinement() {
    let levels: Vec<[f64; 4]> = [4usize, 2, 1]
        .iter()
        .map(|&k| {
            let cfg = SimConfig { t_end: 1.0, n_cells: 2000 / k, dt: 1e-3 * k as f64, ..SimConfig::reference() };
            final_diagnostics(&run_coupled(&cfg).unwrap())
        })
        .collect();
    for (i, name) in ["phi", "phidot", "energy", "first moment"].iter().enumerate() {
        let ratio = (levels[0][i] - levels[1][i]).abs() / (levels[1][i] - levels[2][i]).abs();
        assert!((3.8..4.2).contains(&ratio), "{name}: ratio {ratio}");
    }
}

/// sup-distance on `q <= 20` between the ultra-mode run and the exact
/// solution at the run's own limiting time change.
fn ultra_gap(n_cells: usize, dt: f64) -> f64 {
    let cfg = SimConfig { mode: Mode::Ultra, n_cells, dt, ..SimConfig::reference() };
    let traj = run_coupled(&cfg).unwrap();
    let last = traj.field.last().unwrap();
    assert!(last.phidot < 0.0);
    let tc = time_change(&traj.field).unwrap();
    assert!((tc.tau_infinity() - last.tau).abs() < 1e-12);
    traj.grid
        .centroids()
        .iter()
        .zip(&traj.final_density.values)
        .take_while(|(q, _)| **q <= 20.0)
        .map(|(&q, &f)| (f - asymptotic_profile(&Profile::exp(), &tc, q).unwrap()).abs())
        .fold(0.0, f64::max)
}

#[test]
fn ultra_preset_approaches_time_changed_exact_profile() {
    let coarse = ultra_gap(2000, 1e-3);
    let fine = ultra_gap(4000, 5e-4);
    assert!(coarse < 1e-4, "{coarse}");
    assert!(coarse / fine > 3.0, "{coarse} {fine}");
}

#[test]
fn reference_field_settles() {
    let traj = run_coupled(&SimConfig::reference()).unwrap();
    let field = &traj.field;
    let phidot_at = |t: f64| {
        let k = (t / field.dt).round() as usize;
        field.states[k].phidot
    };
    let gaps: Vec<f64> = [2.5, 5.0, 10.0, 20.0].iter().map(|&t| (phidot_at(t) - phidot_at(t / 2.0)).abs()).collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    assert!(gaps[3] < 1e-12, "{gaps:?}");
    // tau(2T) - tau(T), summed over the window.
    let window = |a: f64, b: f64| -> f64 {
        field
            .states
            .windows(2)
            .filter(|w| w[0].t >= a - 1e-9 && w[1].t <= b + 1e-9)
            .map(|w| 0.5 * (w[1].t - w[0].t) * ((2.0 * w[0].phi).exp() + (2.0 * w[1].phi).exp()))
            .sum()
    };
    let tails: Vec<f64> = [1.0, 2.0, 4.0, 8.0].iter().map(|&t| window(t, 2.0 * t)).collect();
    assert!(tails.windows(2).all(|w| w[1] < 1e-2 * w[0]), "{tails:?}");
    let first = traj.diagnostics.iter().map(|d| d.first_abs_moment).fold(0.0, f64::max);
    let last = traj.diagnostics.last().unwrap().first_abs_moment;
    assert!(first < 101.1 && (first - last).abs() < 1e-6 * last, "{first} {last}");
}

#[test]
fn weighted_moment_stays_bounded_under_decaying_field() {
    let grid = RadialGrid::uniform(60.0, 1500).unwrap();
    let mut f = DensityState::from_profile(&grid, &Profile::exp());
    let mut stepper = ThetaStepper::new(0.5, Mode::Relativistic, 1.0).unwrap();
    let dt = 1e-2;
    let phi = |t: f64| -t / 2.0;
    let mut history = Vec::new();
    for k in 0..2000 {
        let t = k as f64 * dt;
        stepper.step(&grid, &mut f.values, &FieldValue::new(phi(t + 0.5 * dt)), dt).unwrap();
        history.push(weighted_moment(&f.values, &grid, &FieldValue::new(phi(t + dt)), 0.5));
    }
    // Observed supremum 152.406.
    let sup = history.iter().copied().fold(0.0, f64::max);
    assert!(sup < 155.0, "{sup}");
    // Growth over [10, 20] is a small fraction of that over [5, 10].
    let late = history[1999] - history[999];
    let mid = history[999] - history[499];
    assert!(late >= 0.0 && late < 0.1 * mid, "{mid} {late}");
}
