//! The self-consistent system: density on the radial grid, field from the
//! density moment. Time marching is Strang splitting (field half step with
//! the old density, density full step at the half-step field, field half
//! step with the new density). The fixed-point mode rebuilds the same
//! solution by alternating linear solves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fp_radial::{boundary_density, moments, nonvanishing_measure, DensityState, Mode, RadialGrid, ThetaStepper};
use crate::geometry::FieldValue;
use crate::nordstrom::{
    advance_field, field_source_unchecked, kinetic_energy, FieldBoundMargins, FieldBounds, FieldState, FieldTrajectory,
};
use crate::profile::Profile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub profile: Profile,
    pub phi_in: f64,
    pub psi_in: f64,
    pub t_end: f64,
    pub dt: f64,
    pub q_max: f64,
    pub n_cells: usize,
    /// Ratio of the last to the first cell width; 1 is uniform.
    pub stretch: f64,
    pub mode: Mode,
    pub theta: f64,
    /// Scale of the diffusion operator.
    pub sigma: f64,
    pub diagnostics_every: usize,
    pub snapshot_every: usize,
    pub nonvanish_eps: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::reference()
    }
}

impl SimConfig {
    /// `f_in = e^{-q}`, `phi_in = psi_in = 0`, `q_max = 40`, `n = 2000`,
    /// `dt = 1e-3`, `t_end = 20`.
    pub fn reference() -> Self {
        Self {
            profile: Profile::exp(),
            phi_in: 0.0,
            psi_in: 0.0,
            t_end: 20.0,
            dt: 1e-3,
            q_max: 40.0,
            n_cells: 2000,
            stretch: 1.0,
            mode: Mode::Relativistic,
            theta: 0.5,
            sigma: 1.0,
            diagnostics_every: 10,
            snapshot_every: 1000,
            nonvanish_eps: 0.05,
        }
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn grid(&self) -> Result<RadialGrid> {
        RadialGrid::stretched(self.q_max, self.n_cells, self.stretch)
    }

    pub fn validate(&self) -> Result<()> {
        let range = |key: &str, ok: bool, msg: String| {
            if ok {
                Ok(())
            } else {
                Err(Error::Range { key: key.into(), msg })
            }
        };
        range("t_end", self.t_end.is_finite() && self.t_end > 0.0, format!("must be positive, got {}", self.t_end))?;
        range("dt", self.dt.is_finite() && self.dt > 0.0, format!("must be positive, got {}", self.dt))?;
        range("dt", self.dt <= self.t_end, format!("must not exceed t_end = {}, got {}", self.t_end, self.dt))?;
        range("phi_in", self.phi_in.is_finite(), format!("must be finite, got {}", self.phi_in))?;
        range("psi_in", self.psi_in.is_finite(), format!("must be finite, got {}", self.psi_in))?;
        range("q_max", self.q_max.is_finite() && self.q_max > 0.0, format!("must be positive, got {}", self.q_max))?;
        range("n_cells", self.n_cells >= 2, format!("must be at least 2, got {}", self.n_cells))?;
        range("stretch", self.stretch.is_finite() && self.stretch >= 1.0, format!("must be >= 1, got {}", self.stretch))?;
        range("theta", (0.0..=1.0).contains(&self.theta), format!("must lie in [0, 1], got {}", self.theta))?;
        range("sigma", self.sigma.is_finite() && self.sigma >= 0.0, format!("must be nonnegative, got {}", self.sigma))?;
        range("diagnostics_every", self.diagnostics_every >= 1, "must be at least 1".into())?;
        range("snapshot_every", self.snapshot_every >= 1, "must be at least 1".into())?;
        range(
            "nonvanish_eps",
            self.nonvanish_eps.is_finite() && self.nonvanish_eps > 0.0,
            format!("must be positive, got {}", self.nonvanish_eps),
        )?;
        match self.profile {
            Profile::Exponential { amplitude, rate } | Profile::Gaussian { amplitude, rate } => {
                range("f_in.amplitude", amplitude.is_finite() && amplitude >= 0.0, format!("must be nonnegative, got {amplitude}"))?;
                range("f_in.rate", rate.is_finite() && rate > 0.0, format!("must be positive, got {rate}"))?;
            }
            Profile::Constant { value } => {
                range("f_in.amplitude", value.is_finite() && value >= 0.0, format!("must be nonnegative, got {value}"))?;
            }
            Profile::Zero => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub t: f64,
    pub mass: f64,
    pub l2_norm: f64,
    pub first_abs_moment: f64,
    pub energy: f64,
    /// `E(t) - E(0) - 3 sigma M \int_0^t e^{2 phi}`.
    pub energy_identity_residual: f64,
    pub nonvanishing_measure: f64,
    pub phi: f64,
    pub phidot: f64,
    pub phiddot_sign_ok: bool,
    pub field_bound_margins: FieldBoundMargins,
    pub boundary_density: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub config: SimConfig,
    pub grid: RadialGrid,
    pub density_snapshots: Vec<DensityState>,
    pub field: FieldTrajectory,
    pub diagnostics: Vec<DiagnosticsRecord>,
    pub final_density: DensityState,
}

impl Trajectory {
    pub fn initial_mass(&self) -> f64 {
        self.diagnostics.first().map_or(0.0, |d| d.mass)
    }

    pub fn initial_energy(&self) -> f64 {
        self.diagnostics.first().map_or(0.0, |d| d.energy)
    }

    pub fn max_relative_mass_drift(&self) -> f64 {
        let m0 = self.initial_mass();
        self.diagnostics
            .iter()
            .map(|d| if m0 == 0.0 { d.mass.abs() } else { ((d.mass - m0) / m0).abs() })
            .fold(0.0, f64::max)
    }

    pub fn field_bounds(&self) -> FieldBounds {
        FieldBounds {
            sigma: self.config.sigma,
            ..FieldBounds::new(self.initial_mass(), self.initial_energy())
        }
    }
}

/// Per-run state shared by the coupled and fixed-point drivers.
struct Marcher {
    cfg: SimConfig,
    grid: RadialGrid,
    stepper: ThetaStepper,
}

impl Marcher {
    fn new(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.grid()?;
        let stepper = ThetaStepper::new(cfg.theta, cfg.mode, cfg.sigma)?;
        Ok(Self { cfg: cfg.clone(), grid, stepper })
    }

    fn initial(&self) -> (DensityState, FieldState) {
        let f = DensityState::from_profile(&self.grid, &self.cfg.profile);
        let mut s = FieldState::initial(self.cfg.phi_in, self.cfg.psi_in);
        s.accel = -field_source_unchecked(&s.field_value(), &f.values, &self.grid);
        (f, s)
    }

    /// Field half step with a frozen density.
    fn field_half(&self, s: &FieldState, f: &[f64], h: f64) -> Result<FieldState> {
        advance_field(s, |_, phi| field_source_unchecked(&FieldValue::new(phi), f, &self.grid), h)
    }

    fn density_step(&mut self, f: &mut DensityState, phi_mid: f64, dt: f64) -> Result<()> {
        self.stepper.step(&self.grid, &mut f.values, &FieldValue::new(phi_mid), dt)?;
        f.t += dt;
        if f.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("density became non-finite".into()));
        }
        Ok(())
    }

    fn record(&self, step: usize, f: &DensityState, s: &FieldState, first: &FieldState, bounds: &FieldBounds, tau_trap: f64) -> DiagnosticsRecord {
        let fv = s.field_value();
        let m = moments(f, &self.grid, &fv);
        let energy = kinetic_energy(&f.values, &self.grid, &fv) + 0.5 * s.phidot * s.phidot;
        let (m0, e0) = if step == 0 { (m.mass, energy) } else { (bounds.mass, bounds.initial_energy) };
        DiagnosticsRecord {
            step,
            t: s.t,
            mass: m.mass,
            l2_norm: m.l2,
            first_abs_moment: m.first_abs_moment,
            energy,
            energy_identity_residual: energy - e0 - 3.0 * self.cfg.sigma * m0 * tau_trap,
            nonvanishing_measure: nonvanishing_measure(f, self.cfg.nonvanish_eps, &self.grid),
            phi: s.phi,
            phidot: s.phidot,
            phiddot_sign_ok: s.accel <= 0.0,
            field_bound_margins: bounds.margins(first, s),
            boundary_density: boundary_density(f),
        }
    }
}

/// Marches the coupled system and records diagnostics.
pub fn run_coupled(cfg: &SimConfig) -> Result<Trajectory> {
    run_coupled_with(cfg, |_, _| {})
}

/// [`run_coupled`] calling `observer` with each recorded diagnostics row and
/// the density at that time.
pub fn run_coupled_with<O>(cfg: &SimConfig, mut observer: O) -> Result<Trajectory>
where
    O: FnMut(&DiagnosticsRecord, &DensityState),
{
    let mut m = Marcher::new(cfg)?;
    let (mut f, mut s) = m.initial();
    let first = s;
    let fv0 = s.field_value();
    let mass0 = moments(&f, &m.grid, &fv0).mass;
    let e0 = kinetic_energy(&f.values, &m.grid, &fv0) + 0.5 * s.phidot * s.phidot;
    let bounds = FieldBounds { sigma: cfg.sigma, ..FieldBounds::new(mass0, e0) };
    let mut field = FieldTrajectory::new(cfg.dt, s);
    let mut tau_trap = 0.0;
    let rec = m.record(0, &f, &s, &first, &bounds, tau_trap);
    observer(&rec, &f);
    let mut diagnostics = vec![rec];
    let mut snapshots = vec![f.clone()];
    let n = cfg.n_steps();
    for step in 1..=n {
        let advance = |m: &mut Marcher, f: &mut DensityState, s: &FieldState| -> Result<FieldState> {
            let mid = m.field_half(s, &f.values, 0.5 * cfg.dt)?;
            m.density_step(f, mid.phi, cfg.dt)?;
            m.field_half(&mid, &f.values, 0.5 * cfg.dt)
        };
        let mut next = advance(&mut m, &mut f, &s).map_err(|e| e.at_step(step))?;
        // Times are pinned to the step grid rather than accumulated.
        next.t = step as f64 * cfg.dt;
        tau_trap += exp2phi_integral(&s, &next);
        s = next;
        f.t = s.t;
        field.push(s).map_err(|e| e.at_step(step))?;
        if step % cfg.diagnostics_every == 0 || step == n {
            let rec = m.record(step, &f, &s, &first, &bounds, tau_trap);
            observer(&rec, &f);
            diagnostics.push(rec);
        }
        if step % cfg.snapshot_every == 0 || step == n {
            snapshots.push(f.clone());
        }
    }
    Ok(Trajectory {
        config: cfg.clone(),
        grid: m.grid,
        density_snapshots: snapshots,
        field,
        diagnostics,
        final_density: f,
    })
}

/// `\int e^{2 phi}` over one step, by three-point Gauss quadrature of the
/// cubic Hermite interpolant through `(phi, phidot)` at both ends.
fn exp2phi_integral(a: &FieldState, b: &FieldState) -> f64 {
    const NODES: [(f64, f64); 3] = [
        (0.112_701_665_379_258_31, 5.0 / 18.0),
        (0.5, 8.0 / 18.0),
        (0.887_298_334_620_741_7, 5.0 / 18.0),
    ];
    let h = b.t - a.t;
    NODES
        .iter()
        .map(|&(s, w)| {
            let s2 = s * s;
            let s3 = s2 * s;
            let phi = (2.0 * s3 - 3.0 * s2 + 1.0) * a.phi
                + (s3 - 2.0 * s2 + s) * h * a.phidot
                + (3.0 * s2 - 2.0 * s3) * b.phi
                + (s3 - s2) * h * b.phidot;
            w * (2.0 * phi).exp()
        })
        .sum::<f64>()
        * h
}

/// `max |E(t) - E(0) - 3 sigma M \int_0^t e^{2 phi}|` over the records, with
/// the integral recomputed from the stored field samples.
pub fn energy_identity_residual(traj: &Trajectory) -> f64 {
    let (Some(first), states) = (traj.diagnostics.first(), &traj.field.states) else {
        return 0.0;
    };
    let m0 = first.mass;
    let e0 = first.energy;
    let mut tau = vec![0.0; states.len()];
    for k in 1..states.len() {
        let (a, b) = (&states[k - 1], &states[k]);
        tau[k] = tau[k - 1] + exp2phi_integral(a, b);
    }
    traj.diagnostics
        .iter()
        .filter_map(|d| tau.get(d.step).map(|t| (d.energy - e0 - 3.0 * traj.config.sigma * m0 * t).abs()))
        .fold(0.0, f64::max)
}

/// Initial guess for the field in the fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FieldSeed {
    /// `phi(t) = phi_in`
    Constant,
    /// `phi(t) = phi_in + psi_in t`
    Free,
    /// `phi(t) = phi_in - rate t`
    LinearDecay(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointIterate {
    /// Field at every full step.
    pub field: FieldTrajectory,
    /// Field at every half step `t_{k+1/2}`, which drives the density.
    pub half_steps: Vec<f64>,
    pub final_density: DensityState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointReport {
    pub iterates: Vec<FixedPointIterate>,
    /// `sup_t |phi_{n+1} - phi_n|`
    pub phi_diffs: Vec<f64>,
    /// `sup_t ||f_{n+1}(t) - f_n(t)||_{L^2}`
    pub f_diffs: Vec<f64>,
    /// Differences stopped shrinking while still above the tolerance.
    pub stagnated: bool,
}

/// Alternates linear density solves driven by the previous field with field
/// solves driven by the new density, on `[0, t_end]`, `n_iter` times.
pub fn run_fixed_point(cfg: &SimConfig, n_iter: usize, t_end: f64, seed: FieldSeed) -> Result<FixedPointReport> {
    if n_iter == 0 {
        return Err(Error::Range { key: "n_iter".into(), msg: "must be at least 1".into() });
    }
    let cfg = SimConfig { t_end, ..cfg.clone() };
    let mut m = Marcher::new(&cfg)?;
    let n = cfg.n_steps();
    let dt = cfg.dt;
    let (f0, s0) = m.initial();
    let seed_phi = |t: f64| match seed {
        FieldSeed::Constant => cfg.phi_in,
        FieldSeed::Free => cfg.phi_in + cfg.psi_in * t,
        FieldSeed::LinearDecay(r) => cfg.phi_in - r * t,
    };
    let mut half: Vec<f64> = (0..n).map(|k| seed_phi((k as f64 + 0.5) * dt)).collect();
    let mut prev_phi: Vec<f64> = (0..=n).map(|k| seed_phi(k as f64 * dt)).collect();
    let mut prev_f: Option<Vec<Vec<f64>>> = None;
    let mut report = FixedPointReport { iterates: Vec::new(), phi_diffs: Vec::new(), f_diffs: Vec::new(), stagnated: false };
    let vol = m.grid.vol_weights().to_vec();
    for _ in 0..n_iter {
        // Linear density solve with the previous field.
        let mut f = f0.clone();
        let mut densities = Vec::with_capacity(n + 1);
        densities.push(f.values.clone());
        for (k, &phi_mid) in half.iter().enumerate() {
            m.density_step(&mut f, phi_mid, dt).map_err(|e| e.at_step(k + 1))?;
            densities.push(f.values.clone());
        }
        // Field solve driven by the new density.
        let mut s = s0;
        let mut field = FieldTrajectory::new(dt, s);
        let mut new_half = Vec::with_capacity(n);
        for k in 0..n {
            let mid = m.field_half(&s, &densities[k], 0.5 * dt).map_err(|e| e.at_step(k + 1))?;
            new_half.push(mid.phi);
            s = m.field_half(&mid, &densities[k + 1], 0.5 * dt).map_err(|e| e.at_step(k + 1))?;
            s.t = (k + 1) as f64 * dt;
            field.push(s)?;
        }
        let phi_diff = field
            .states
            .iter()
            .zip(&prev_phi)
            .map(|(a, b)| (a.phi - b).abs())
            .fold(0.0, f64::max);
        let f_diff = prev_f.as_ref().map_or(f64::NAN, |pf| {
            pf.iter()
                .zip(&densities)
                .map(|(a, b)| {
                    a.iter()
                        .zip(b)
                        .zip(&vol)
                        .map(|((x, y), v)| v * (x - y).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(0.0, f64::max)
        });
        report.phi_diffs.push(phi_diff);
        report.f_diffs.push(f_diff);
        prev_phi = field.states.iter().map(|s| s.phi).collect();
        half = new_half.clone();
        prev_f = Some(densities);
        report.iterates.push(FixedPointIterate { field, half_steps: new_half, final_density: f });
    }
    let d = &report.phi_diffs;
    if d.len() >= 2 {
        let (a, b) = (d[d.len() - 2], d[d.len() - 1]);
        report.stagnated = b > 1e-10 && b > 0.9 * a;
    }
    Ok(report)
}
