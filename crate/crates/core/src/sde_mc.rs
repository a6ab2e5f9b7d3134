//! Feynman-Kac Monte Carlo for the Fokker-Planck flow: Euler-Maruyama paths
//! of `dQ = d(phi, Q) ds + G(phi, Q) dW` run against reversed time, averaged
//! over `f_in(Q_t)`.
//!
//! Every path draws from its own ChaCha stream selected by the path index,
//! and the mean is reduced by pairwise summation in index order, so an
//! estimate depends only on the configuration, never on the thread schedule.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fp_radial::Mode;
use crate::geometry::{sde_coefficients, FieldValue, MomentumPoint};
use crate::nordstrom::FieldTrajectory;
use crate::profile::RadialProfile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub antithetic: bool,
    /// `Ultra` uses the coefficients of the limiting matrix `p p^T / |p|`.
    pub mode: Mode,
}

impl PathConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::Domain("n_paths must be at least 1".into()));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Domain(format!("path step must be positive, got {}", self.dt)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    /// Number of independent samples: paths, or antithetic pairs.
    pub n_effective: usize,
}

/// Drift and noise of the path equation at one point.
pub fn path_coefficients(mode: Mode, fv: &FieldValue, p: &Vector3<f64>) -> (Vector3<f64>, Matrix3<f64>) {
    match mode {
        Mode::Relativistic => sde_coefficients(fv, &MomentumPoint::new(*p)),
        Mode::Ultra => {
            let q = p.norm();
            if q == 0.0 {
                return (Vector3::zeros(), Matrix3::zeros());
            }
            let dir = p / q;
            let e2 = fv.exp2phi();
            (3.0 * e2 * dir, (2.0 * e2 * q).sqrt() * dir * dir.transpose())
        }
    }
}

/// `Q + d h + G dw` with `dw ~ N(0, h I)` already scaled.
pub(crate) fn em_step(mode: Mode, phi: f64, q: &Vector3<f64>, h: f64, dw: &Vector3<f64>) -> Vector3<f64> {
    let (d, g) = path_coefficients(mode, &FieldValue::new(phi), q);
    q + d * h + g * dw
}

fn normal3<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    Vector3::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    )
}

fn steps_for(t: f64, dt: f64) -> usize {
    (t / dt).ceil().max(1.0) as usize
}

fn simulate_signed<R: Rng + ?Sized>(
    p0: Vector3<f64>,
    t: f64,
    traj: &FieldTrajectory,
    cfg: &PathConfig,
    rng: &mut R,
    sign: f64,
) -> Result<Vector3<f64>> {
    if t == 0.0 {
        return Ok(p0);
    }
    let n = steps_for(t, cfg.dt);
    let h = t / n as f64;
    let sqrt_h = h.sqrt();
    let mut q = p0;
    for k in 0..n {
        let phi = traj.phi_at(t - k as f64 * h)?;
        let dw = normal3(rng) * (sign * sqrt_h);
        q = em_step(cfg.mode, phi, &q, h, &dw);
        if !(q[0].is_finite() && q[1].is_finite() && q[2].is_finite()) {
            return Err(Error::Numerical(format!(
                "path left the finite range at step {k} (dt = {h} too large?)"
            )));
        }
    }
    Ok(q)
}

/// Euler-Maruyama path from `p0` over `[0, t]`, with the field read at the
/// reversed time `t - s`.
pub fn simulate_path<R: Rng + ?Sized>(
    p0: Vector3<f64>,
    t: f64,
    traj: &FieldTrajectory,
    cfg: &PathConfig,
    rng: &mut R,
) -> Result<Vector3<f64>> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::Domain(format!("path horizon must be nonnegative, got {t}")));
    }
    cfg.validate()?;
    simulate_signed(p0, t, traj, cfg, rng, 1.0)
}

/// Stream for path (or antithetic pair) `index`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Sum in a fixed binary-tree order.
pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n if n <= 8 => xs.iter().sum(),
        n => {
            let (a, b) = xs.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

fn summarize(samples: &[f64]) -> McEstimate {
    let n = samples.len();
    let mean = pairwise_sum(samples) / n as f64;
    let std_error = if n > 1 {
        let sq: Vec<f64> = samples.iter().map(|x| (x - mean).powi(2)).collect();
        (pairwise_sum(&sq) / (n - 1) as f64).sqrt() / (n as f64).sqrt()
    } else {
        0.0
    };
    McEstimate {
        mean,
        std_error,
        n_effective: n,
    }
}

/// `E[f_in(|Q_t|)]` over paths started at `p`.
pub fn feynman_kac_estimate<P: RadialProfile + ?Sized>(
    f_in: &P,
    p: Vector3<f64>,
    t: f64,
    traj: &FieldTrajectory,
    cfg: &PathConfig,
) -> Result<McEstimate> {
    cfg.validate()?;
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::Domain(format!("path horizon must be nonnegative, got {t}")));
    }
    if t > 0.0 {
        traj.phi_at(0.0)?;
        traj.phi_at(t)?;
    }
    let samples: Vec<f64> = if cfg.antithetic {
        let pairs = cfg.n_paths.div_ceil(2);
        (0..pairs as u64)
            .into_par_iter()
            .map(|k| {
                let mut a = path_rng(cfg.seed, k);
                let mut b = a.clone();
                let qa = simulate_signed(p, t, traj, cfg, &mut a, 1.0)?;
                let qb = simulate_signed(p, t, traj, cfg, &mut b, -1.0)?;
                Ok(0.5 * (f_in.eval(qa.norm()) + f_in.eval(qb.norm())))
            })
            .collect::<Result<_>>()?
    } else {
        (0..cfg.n_paths as u64)
            .into_par_iter()
            .map(|k| {
                let mut rng = path_rng(cfg.seed, k);
                Ok(f_in.eval(simulate_signed(p, t, traj, cfg, &mut rng, 1.0)?.norm()))
            })
            .collect::<Result<_>>()?
    };
    Ok(summarize(&samples))
}
