//! The homogeneous Nordström field `phi'' = -H_f(t, phi)`, its energy and
//! the a-priori field bounds that a coupled run must respect.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fp_radial::{DensityState, RadialGrid};
use crate::geometry::FieldValue;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldState {
    pub t: f64,
    pub phi: f64,
    pub phidot: f64,
    /// `\int_0^t e^{2 phi}`, accumulated by the trapezoid rule.
    pub tau: f64,
    /// `phi''` at `t`, i.e. `-H_f`.
    pub accel: f64,
}

impl FieldState {
    pub fn initial(phi_in: f64, psi_in: f64) -> Self {
        Self {
            t: 0.0,
            phi: phi_in,
            phidot: psi_in,
            tau: 0.0,
            accel: 0.0,
        }
    }

    pub fn field_value(&self) -> FieldValue {
        FieldValue::new(self.phi)
    }
}

/// `H_f = e^{2 phi} 4 pi \int f q^2 / sqrt(e^{2 phi} + q^2) dq`.
pub fn field_source(fv: &FieldValue, density: &DensityState, grid: &RadialGrid) -> Result<f64> {
    density.check_nonnegative()?;
    Ok(field_source_unchecked(fv, &density.values, grid))
}

pub(crate) fn field_source_unchecked(fv: &FieldValue, f: &[f64], grid: &RadialGrid) -> f64 {
    let e2 = fv.exp2phi();
    let s: f64 = f
        .iter()
        .zip(grid.vol_weights().iter().zip(grid.centroids()))
        .map(|(fj, (vj, xj))| vj * fj / (e2 + xj * xj).sqrt())
        .sum();
    e2 * s
}

/// One classical Runge-Kutta step of `(phi, phidot)`. `source(t, phi)` must
/// return `H_f`; `tau` is advanced by the trapezoid rule on `e^{2 phi}`.
pub fn advance_field<F>(state: &FieldState, mut source: F, dt: f64) -> Result<FieldState>
where
    F: FnMut(f64, f64) -> f64,
{
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Domain(format!("field step must be positive, got {dt}")));
    }
    let mut h = |t: f64, phi: f64| -> Result<f64> {
        let v = source(t, phi);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Numerical(format!("field source is {v} at t = {t}, phi = {phi}")))
        }
    };
    let FieldState { t, phi, phidot, .. } = *state;
    let half = 0.5 * dt;
    let a1 = -h(t, phi)?;
    let v2 = phidot + half * a1;
    let a2 = -h(t + half, phi + half * phidot)?;
    let v3 = phidot + half * a2;
    let a3 = -h(t + half, phi + half * v2)?;
    let v4 = phidot + dt * a3;
    let a4 = -h(t + dt, phi + dt * v3)?;
    let phi_new = phi + dt / 6.0 * (phidot + 2.0 * v2 + 2.0 * v3 + v4);
    let phidot_new = phidot + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
    let t_new = t + dt;
    let accel = -h(t_new, phi_new)?;
    Ok(FieldState {
        t: t_new,
        phi: phi_new,
        phidot: phidot_new,
        tau: state.tau + half * ((2.0 * phi).exp() + (2.0 * phi_new).exp()),
        accel,
    })
}

/// `4 pi \int f sqrt(e^{2 phi} + q^2) q^2 dq + phidot^2 / 2`.
pub fn energy(density: &DensityState, grid: &RadialGrid, state: &FieldState) -> f64 {
    kinetic_energy(&density.values, grid, &state.field_value()) + 0.5 * state.phidot * state.phidot
}

pub(crate) fn kinetic_energy(f: &[f64], grid: &RadialGrid, fv: &FieldValue) -> f64 {
    let e2 = fv.exp2phi();
    f.iter()
        .zip(grid.vol_weights().iter().zip(grid.centroids()))
        .map(|(fj, (vj, xj))| vj * fj * (e2 + xj * xj).sqrt())
        .sum()
}

/// Time-ordered field samples.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldTrajectory {
    pub dt: f64,
    pub states: Vec<FieldState>,
}

impl FieldTrajectory {
    pub fn new(dt: f64, first: FieldState) -> Self {
        Self {
            dt,
            states: vec![first],
        }
    }

    /// Samples a prescribed `phi(t)` on `[0, t_end]`, with `phidot` by
    /// central differences and `tau` by the trapezoid rule.
    pub fn from_fn<F: Fn(f64) -> f64>(phi: F, t_end: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && t_end > 0.0 && t_end.is_finite()) {
            return Err(Error::Domain(format!("bad sampling: t_end = {t_end}, dt = {dt}")));
        }
        let n = (t_end / dt).round().max(1.0) as usize;
        let step = t_end / n as f64;
        let fd = 1e-5 * step.max(1e-3);
        let mut states = Vec::with_capacity(n + 1);
        let mut tau = 0.0;
        for k in 0..=n {
            let t = k as f64 * step;
            let p = phi(t);
            if k > 0 {
                tau += 0.5 * step * ((2.0 * phi(t - step)).exp() + (2.0 * p).exp());
            }
            states.push(FieldState {
                t,
                phi: p,
                phidot: (phi(t + fd) - phi(t - fd)) / (2.0 * fd),
                tau,
                accel: (phi(t + fd) - 2.0 * p + phi(t - fd)) / (fd * fd),
            });
        }
        Ok(Self { dt: step, states })
    }

    pub fn push(&mut self, s: FieldState) -> Result<()> {
        if let Some(last) = self.states.last() {
            if !(s.t > last.t) {
                return Err(Error::Domain(format!(
                    "field samples must be strictly increasing in time ({} after {})",
                    s.t, last.t
                )));
            }
        }
        self.states.push(s);
        Ok(())
    }

    pub fn first(&self) -> Option<&FieldState> {
        self.states.first()
    }

    pub fn last(&self) -> Option<&FieldState> {
        self.states.last()
    }

    pub fn t_end(&self) -> f64 {
        self.last().map_or(0.0, |s| s.t)
    }

    fn bracket(&self, t: f64) -> Result<(usize, f64)> {
        let (Some(a), Some(b)) = (self.first(), self.last()) else {
            return Err(Error::Domain("empty field trajectory".into()));
        };
        let slack = 1e-9 * (1.0 + b.t.abs());
        if t < a.t - slack || t > b.t + slack {
            return Err(Error::Domain(format!(
                "t = {t} outside trajectory range [{}, {}]",
                a.t, b.t
            )));
        }
        if self.states.len() == 1 {
            return Ok((0, 0.0));
        }
        let k = self
            .states
            .partition_point(|s| s.t <= t)
            .clamp(1, self.states.len() - 1)
            - 1;
        let (s0, s1) = (&self.states[k], &self.states[k + 1]);
        Ok((k, ((t - s0.t) / (s1.t - s0.t)).clamp(0.0, 1.0)))
    }

    /// Cubic Hermite interpolation of `phi` using the stored `phidot`.
    pub fn phi_at(&self, t: f64) -> Result<f64> {
        let (k, u) = self.bracket(t)?;
        if self.states.len() == 1 {
            return Ok(self.states[0].phi);
        }
        let (a, b) = (&self.states[k], &self.states[k + 1]);
        let h = b.t - a.t;
        let (u2, u3) = (u * u, u * u * u);
        Ok((2.0 * u3 - 3.0 * u2 + 1.0) * a.phi
            + (u3 - 2.0 * u2 + u) * h * a.phidot
            + (-2.0 * u3 + 3.0 * u2) * b.phi
            + (u3 - u2) * h * b.phidot)
    }

    /// Linear interpolation of the accumulated `tau`.
    pub fn tau_at(&self, t: f64) -> Result<f64> {
        let (k, u) = self.bracket(t)?;
        if self.states.len() == 1 {
            return Ok(self.states[0].tau);
        }
        Ok((1.0 - u) * self.states[k].tau + u * self.states[k + 1].tau)
    }

    /// Least-squares line `phi ~ intercept - slope * t` through the samples
    /// with `t >= t_from`.
    pub fn decay_fit(&self, t_from: f64) -> Option<(f64, f64)> {
        let pts: Vec<(f64, f64)> = self
            .states
            .iter()
            .filter(|s| s.t >= t_from)
            .map(|s| (s.t, s.phi))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let (mt, mp) = pts
            .iter()
            .fold((0.0, 0.0), |(a, b), (t, p)| (a + t / n, b + p / n));
        let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |(a, b), (t, p)| {
            (a + (t - mt) * (p - mp), b + (t - mt) * (t - mt))
        });
        if sxx == 0.0 {
            return None;
        }
        let slope = -sxy / sxx;
        Some((slope, mp + slope * mt))
    }
}

/// Slack of each field bound at one sample; nonnegative means satisfied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldBoundMargins {
    /// `-phi''`
    pub accel_sign: f64,
    /// `phi'' + M e^{phi}`
    pub accel_floor: f64,
    /// `psi_in - phidot`
    pub phidot_cap: f64,
    /// `phi_in + psi_in t - phi`
    pub phi_cap: f64,
    /// Logarithmic energy bound on `phidot` minus `phidot`.
    pub energy_log: f64,
}

impl FieldBoundMargins {
    pub fn entries(&self) -> [(&'static str, f64); 5] {
        [
            ("accel_sign", self.accel_sign),
            ("accel_floor", self.accel_floor),
            ("phidot_cap", self.phidot_cap),
            ("phi_cap", self.phi_cap),
            ("energy_log", self.energy_log),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundViolation {
    pub t: f64,
    pub bound: String,
    pub margin: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldBoundReport {
    pub violations: Vec<BoundViolation>,
    /// First sample index with `phidot < 0`.
    pub t0_index: Option<usize>,
    /// Zero crossing of `phidot`, linearly interpolated between samples.
    pub t0_crossing: Option<f64>,
    /// Smallest margin seen for each bound.
    pub min_margins: Vec<(String, f64)>,
}

impl FieldBoundReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Constants entering the field bounds of a coupled run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldBounds {
    pub mass: f64,
    pub initial_energy: f64,
    /// Scale of the diffusion operator; the energy grows at `3 sigma M e^{2 phi}`.
    pub sigma: f64,
    /// Absolute slack granted to each comparison, relative to `1 + |rhs|`.
    pub tolerance: f64,
}

impl FieldBounds {
    pub fn new(mass: f64, initial_energy: f64) -> Self {
        Self {
            mass,
            initial_energy,
            sigma: 1.0,
            tolerance: 1e-9,
        }
    }

    pub fn margins(&self, first: &FieldState, s: &FieldState) -> FieldBoundMargins {
        let (m, e0) = (self.mass, self.initial_energy);
        let energy_log = if m > 0.0 && e0 > 0.0 && self.sigma > 0.0 {
            let growth = (e0 + 3.0 * self.sigma * m * s.tau) / e0;
            first.phidot - m / (3.0 * self.sigma) * growth.ln() - s.phidot
        } else {
            first.phidot - s.phidot
        };
        FieldBoundMargins {
            accel_sign: -s.accel,
            accel_floor: s.accel + m * s.phi.exp(),
            phidot_cap: first.phidot - s.phidot,
            phi_cap: first.phi + first.phidot * s.t - s.phi,
            energy_log,
        }
    }

    pub fn check(&self, traj: &FieldTrajectory) -> FieldBoundReport {
        let mut report = FieldBoundReport::default();
        let Some(first) = traj.first() else {
            return report;
        };
        let slack = |x: f64| -self.tolerance * (1.0 + x.abs());
        let mut mins: Vec<(String, f64)> = Vec::new();
        let mut record = |name: &str, t: f64, margin: f64, scale: f64, report: &mut FieldBoundReport| {
            match mins.iter_mut().find(|(n, _)| n == name) {
                Some((_, v)) => *v = v.min(margin),
                None => mins.push((name.to_string(), margin)),
            }
            if margin < slack(scale) {
                report.violations.push(BoundViolation {
                    t,
                    bound: name.to_string(),
                    margin,
                });
            }
        };
        // The initial sample carries no evaluated acceleration when produced
        // by `FieldState::initial`; it is checked from the second sample on.
        for (k, s) in traj.states.iter().enumerate() {
            let m = self.margins(first, s);
            for (name, v) in m.entries() {
                if k == 0 && name.starts_with("accel") {
                    continue;
                }
                let scale = match name {
                    "phi_cap" => s.phi,
                    "accel_floor" => self.mass * s.phi.exp(),
                    _ => s.phidot,
                };
                record(name, s.t, v, scale, &mut report);
            }
        }
        if let Some(k0) = traj.states.iter().position(|s| s.phidot < 0.0) {
            report.t0_index = Some(k0);
            let s0 = traj.states[k0];
            report.t0_crossing = Some(if k0 == 0 {
                s0.t
            } else {
                let p = traj.states[k0 - 1];
                p.t + (s0.t - p.t) * p.phidot / (p.phidot - s0.phidot)
            });
            for s in &traj.states[k0..] {
                let envelope = s0.phi - s0.phidot.abs() * (s.t - s0.t);
                record("linear_envelope", s.t, envelope - s.phi, s.phi, &mut report);
            }
        }
        report.min_margins = mins;
        report
    }
}

/// [`FieldBounds::check`] with unit diffusion scale.
pub fn check_field_bounds(traj: &FieldTrajectory, mass: f64, initial_energy: f64) -> FieldBoundReport {
    FieldBounds::new(mass, initial_energy).check(traj)
}
