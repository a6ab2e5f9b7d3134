//! Exact solutions of the ultra-relativistic equation `d_t g = q g'' + 3 g'`
//! through the Bessel kernel
//!
//! ```text
//! H(tau, q, z) = tau^{-1} e^{-(q+z)/tau} I_2(2 sqrt(q z) / tau),
//! g(t, q)      = q^{-1} \int_0^inf g_in(z) z H(t, q, z) dz,
//! ```
//!
//! its six-dimensional heat-kernel form, the time change that absorbs a
//! decaying conformal factor, and the asymptotic profile it converges to.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nordstrom::FieldTrajectory;
use crate::profile::RadialProfile;
use crate::quad::{integrate, QuadOptions};
use crate::specialfn::{i1_scaled, i2_scaled};

/// Width of the kernel peak, in standard deviations, kept inside the
/// integration range. `e^{-64}` is far below double precision.
const PEAK_WIDTHS: f64 = 8.0;

fn quad_opts() -> QuadOptions {
    QuadOptions {
        abs_tol: 0.0,
        rel_tol: 1e-12,
        max_intervals: 4000,
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive and finite, got {v}")))
    }
}

/// `H(tau, q, z)` evaluated as `tau^{-1} e^{-(sqrt q - sqrt z)^2 / tau} [e^{-x} I_2(x)]`.
pub fn ultra_kernel(tau: f64, q: f64, z: f64) -> f64 {
    let (sq, sz) = (q.sqrt(), z.sqrt());
    let x = 2.0 * sq * sz / tau;
    (-(sq - sz).powi(2) / tau).exp() * i2_scaled(x) / tau
}

/// `d/dtau H(tau, q, z)`.
pub fn ultra_kernel_tau_derivative(tau: f64, q: f64, z: f64) -> f64 {
    let (sq, sz) = (q.sqrt(), z.sqrt());
    let x = 2.0 * sq * sz / tau;
    let envelope = (-(sq - sz).powi(2) / tau).exp() / (tau * tau);
    envelope * (i2_scaled(x) * (1.0 + (q + z) / tau) - x * i1_scaled(x))
}

/// `\int_0^inf H(tau, q, z) q dq`, which equals `z`: the normalisation
/// `\int_0^inf e^{-q/tau} q I_2(2 sqrt(z q)/tau) dq = e^{z/tau} tau z`.
pub fn kernel_q_moment(tau: f64, z: f64) -> Result<f64> {
    check_positive("tau", tau)?;
    check_positive("z", z)?;
    let width = tau.sqrt();
    let hi = (z.sqrt() + 12.0 * width).powi(2);
    let breaks = peak_breaks(z, width, hi);
    Ok(integrate(|q| ultra_kernel(tau, q, z) * q, 0.0, hi, &breaks, quad_opts())?.value)
}

/// `H / q`, finite as `q -> 0` where it tends to `z e^{-z/tau} / (2 tau^3)`.
fn kernel_over_q(tau: f64, q: f64, z: f64) -> f64 {
    if q == 0.0 {
        return z * (-z / tau).exp() / (2.0 * tau.powi(3));
    }
    ultra_kernel(tau, q, z) / q
}

/// Breakpoints `(sqrt c + k w)^2` bracketing a peak of width `w` in the
/// square-root variable around `c`.
fn peak_breaks(center: f64, width: f64, hi: f64) -> Vec<f64> {
    let sc = center.sqrt();
    let k_max = PEAK_WIDTHS as i32;
    (-k_max..=k_max)
        .map(|k| sc + k as f64 * width)
        .filter(|&s| s > 0.0)
        .map(|s| s * s)
        .filter(|&z| z < hi)
        .collect()
}

/// Upper integration limit: the kernel peak plus the profile's own decay.
fn upper_limit<P: RadialProfile + ?Sized>(profile: &P, center: f64, width: f64) -> f64 {
    let peak = (center.sqrt() + (PEAK_WIDTHS + 1.0) * width).powi(2);
    let c = profile.cutoff();
    if c.is_finite() {
        peak.min(2.0 * c + center)
    } else {
        peak
    }
}

/// Exact solution at time `t` and radius `q >= 0`.
pub fn ultra_solution<P: RadialProfile + ?Sized>(g_in: &P, t: f64, q: f64) -> Result<f64> {
    check_positive("t", t)?;
    if !(q.is_finite() && q >= 0.0) {
        return Err(Error::Domain(format!("q must be nonnegative, got {q}")));
    }
    if g_in.cutoff() == 0.0 {
        return Ok(0.0);
    }
    let width = t.sqrt();
    let hi = upper_limit(g_in, q, width);
    let mut breaks = peak_breaks(q, width, hi);
    let c = g_in.cutoff();
    if c.is_finite() {
        breaks.extend([0.25 * c, 0.5 * c, c].into_iter().filter(|&z| z < hi));
    }
    let r = integrate(|z| g_in.eval(z) * z * kernel_over_q(t, q, z), 0.0, hi, &breaks, quad_opts())?;
    Ok(r.value.max(0.0))
}

/// Solution for `g_in(z) = amplitude e^{-rate z}`:
/// `amplitude (1 + rate t)^{-3} e^{-rate q / (1 + rate t)}`.
pub fn exponential_closed_form(amplitude: f64, rate: f64, t: f64, q: f64) -> f64 {
    let s = 1.0 + rate * t;
    amplitude * (-rate * q / s).exp() / s.powi(3)
}

/// Radial heat flow in six dimensions,
/// `u(t, r) = (2 r^2 t)^{-1} e^{-r^2/4t} \int u_in(s) e^{-s^2/4t} s^3 I_2(r s / 2t) ds`.
pub fn heat6d_solution<P: RadialProfile + ?Sized>(u_in: &P, t: f64, r: f64) -> Result<f64> {
    check_positive("t", t)?;
    if !(r.is_finite() && r >= 0.0) {
        return Err(Error::Domain(format!("r must be nonnegative, got {r}")));
    }
    if u_in.cutoff() == 0.0 {
        return Ok(0.0);
    }
    let width = (2.0 * t).sqrt();
    let mut hi = r + (PEAK_WIDTHS + 1.0) * width;
    let c = u_in.cutoff();
    if c.is_finite() {
        hi = hi.min(2.0 * c + r);
    }
    let k_max = PEAK_WIDTHS as i32;
    let breaks: Vec<f64> = (-k_max..=k_max)
        .map(|k| r + k as f64 * width)
        .filter(|&s| s > 0.0 && s < hi)
        .collect();
    let integrand = |s: f64| {
        if r == 0.0 {
            return u_in.eval(s) * s.powi(5) * (-s * s / (4.0 * t)).exp() / (64.0 * t.powi(3));
        }
        let x = r * s / (2.0 * t);
        u_in.eval(s) * s.powi(3) * (-(r - s).powi(2) / (4.0 * t)).exp() * i2_scaled(x) / (2.0 * r * r * t)
    };
    Ok(integrate(integrand, 0.0, hi, &breaks, quad_opts())?.value.max(0.0))
}

/// `tau(t) = \int_0^t e^{2 phi}` on the samples of a field trajectory, with
/// the analytic tail `tau_inf - tau(T) = e^{2 phi(T)} / (2 beta)` of a field
/// decaying like `-beta t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeChange {
    times: Vec<f64>,
    taus: Vec<f64>,
    tau_infinity: f64,
    decay_rate: f64,
    phi_end: f64,
}

impl TimeChange {
    pub fn tau_infinity(&self) -> f64 {
        self.tau_infinity
    }

    /// Fitted `beta` in `phi ~ C - beta t` over the last quarter.
    pub fn decay_rate(&self) -> f64 {
        self.decay_rate
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("nonempty")
    }

    /// Linear interpolation inside the sampled range; beyond it the
    /// exponential tail of the linear-decay fit.
    pub fn tau_of_t(&self, t: f64) -> f64 {
        let t_end = self.t_end();
        if t >= t_end {
            let tail_end = self.tau_infinity - self.taus[self.taus.len() - 1];
            return self.tau_infinity - tail_end * (-2.0 * self.decay_rate * (t - t_end)).exp();
        }
        if t <= 0.0 {
            return 0.0;
        }
        let k = self.times.partition_point(|&s| s <= t).max(1) - 1;
        let u = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        (1.0 - u) * self.taus[k] + u * self.taus[k + 1]
    }

    /// `tau_inf - tau(t) = \int_t^inf e^{2 phi}`.
    pub fn tail(&self, t: f64) -> f64 {
        self.tau_infinity - self.tau_of_t(t)
    }

    pub fn phi_end(&self) -> f64 {
        self.phi_end
    }
}

/// Builds the time change of a decaying field trajectory.
///
/// `tau` is accumulated by the trapezoid rule with the endpoint correction
/// `-h^2/12 (w'(b) - w'(a))`, `w = e^{2 phi}`, built from the stored
/// `phidot`; this is exact for cubic `w`.
pub fn time_change(traj: &FieldTrajectory) -> Result<TimeChange> {
    let states = &traj.states;
    if states.len() < 8 {
        return Err(Error::Domain("field trajectory too short for a time change".into()));
    }
    let t_end = states[states.len() - 1].t;
    let (beta, _) = traj
        .decay_fit(states[0].t + 0.75 * (t_end - states[0].t))
        .ok_or_else(|| Error::Domain("cannot fit the field decay".into()))?;
    if !(beta > 1e-6) {
        return Err(Error::Domain(format!(
            "field does not decay (fitted rate {beta:e}); tau_infinity is not finite"
        )));
    }
    let mut times = Vec::with_capacity(states.len());
    let mut taus = Vec::with_capacity(states.len());
    let mut tau = 0.0;
    times.push(states[0].t);
    taus.push(0.0);
    for w in states.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let h = b.t - a.t;
        let (wa, wb) = ((2.0 * a.phi).exp(), (2.0 * b.phi).exp());
        let (da, db) = (2.0 * a.phidot * wa, 2.0 * b.phidot * wb);
        tau += 0.5 * h * (wa + wb) - h * h / 12.0 * (db - da);
        times.push(b.t);
        taus.push(tau);
    }
    let phi_end = states[states.len() - 1].phi;
    let tail = (2.0 * phi_end).exp() / (2.0 * beta);
    Ok(TimeChange {
        times,
        taus,
        tau_infinity: tau + tail,
        decay_rate: beta,
        phi_end,
    })
}

/// `T_phi[h_in](q)`: the exact solution evaluated at `tau_infinity`.
pub fn asymptotic_profile<P: RadialProfile + ?Sized>(h_in: &P, tc: &TimeChange, q: f64) -> Result<f64> {
    ultra_solution(h_in, tc.tau_infinity(), q)
}

/// One row of [`AsymptoticReport`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticRow {
    pub t: f64,
    pub tau: f64,
    /// `\int_t^inf e^{2 phi}`
    pub tail: f64,
    /// `sup_q |h(t, q) - T_phi[h_in](q)|`
    pub sup_error: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticReport {
    pub tau_infinity: f64,
    pub rows: Vec<AsymptoticRow>,
    /// `max ratio / min ratio`
    pub spread: f64,
    pub max_ratio: f64,
}

impl AsymptoticReport {
    pub fn bounded_by(&self, spread_limit: f64) -> bool {
        self.spread.is_finite() && self.spread <= spread_limit
    }
}

/// Momentum sample for the sup-norm: quadratically spaced on `(0, q_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupSample {
    pub q_max: f64,
    pub n: usize,
}

impl Default for SupSample {
    fn default() -> Self {
        Self { q_max: 40.0, n: 400 }
    }
}

impl SupSample {
    pub fn points(&self) -> Vec<f64> {
        (0..=self.n)
            .map(|k| self.q_max * (k as f64 / self.n as f64).powi(2))
            .collect()
    }
}

/// Sup-norm distance to the asymptotic profile at each requested time,
/// divided by the remaining mass of the conformal factor.
pub fn verify_asymptotic_bound<P: RadialProfile + ?Sized>(
    h_in: &P,
    traj: &FieldTrajectory,
    times: &[f64],
    sample: SupSample,
) -> Result<AsymptoticReport> {
    let tc = time_change(traj)?;
    let qs = sample.points();
    let limit: Vec<f64> = qs
        .iter()
        .map(|&q| asymptotic_profile(h_in, &tc, q))
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(times.len());
    for &t in times {
        if !(t > 1.0) {
            return Err(Error::Domain(format!("comparison times must exceed 1, got {t}")));
        }
        let tau = tc.tau_of_t(t);
        let mut sup = 0.0f64;
        for (&q, lim) in qs.iter().zip(&limit) {
            sup = sup.max((ultra_solution(h_in, tau, q)? - lim).abs());
        }
        let tail = tc.tail(t);
        rows.push(AsymptoticRow {
            t,
            tau,
            tail,
            sup_error: sup,
            ratio: sup / tail,
        });
    }
    let (lo, hi) = rows
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r.ratio), hi.max(r.ratio)));
    Ok(AsymptoticReport {
        tau_infinity: tc.tau_infinity(),
        rows,
        spread: hi / lo,
        max_ratio: hi,
    })
}
