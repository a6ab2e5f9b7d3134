//! Conservative finite-volume solver for the spherically symmetric
//! Fokker-Planck equation
//!
//! ```text
//! d_t f = sigma e^{2 phi} q^{-2} d_q ( q^2 Psi(q) d_q f )
//! ```
//!
//! with `Psi = sqrt(e^{2 phi} + q^2)` (relativistic) or `Psi = q` (ultra).
//! Fluxes live on cell faces and vanish at both ends, so mass is conserved
//! to round-off.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::FieldValue;
use crate::profile::RadialProfile;

/// Which diffusion matrix the radial operator reduces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Relativistic,
    Ultra,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "relativistic" => Ok(Mode::Relativistic),
            "ultra" => Ok(Mode::Ultra),
            other => Err(format!("unknown mode `{other}` (expected relativistic or ultra)")),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Relativistic => "relativistic",
            Mode::Ultra => "ultra",
        })
    }
}

/// Cells `[faces[j], faces[j+1]]` covering `[0, q_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    faces: Vec<f64>,
    centers: Vec<f64>,
    centroids: Vec<f64>,
    vol_weights: Vec<f64>,
    moment_weights: Vec<f64>,
}

impl RadialGrid {
    pub fn uniform(q_max: f64, n: usize) -> Result<Self> {
        Self::check(q_max, n)?;
        let faces = (0..=n).map(|j| q_max * j as f64 / n as f64).collect();
        Ok(Self::from_faces(faces))
    }

    /// Geometric cell widths growing by a constant factor so that the last
    /// cell is `ratio` times wider than the first.
    pub fn stretched(q_max: f64, n: usize, ratio: f64) -> Result<Self> {
        Self::check(q_max, n)?;
        if !(ratio.is_finite() && ratio >= 1.0) {
            return Err(Error::Domain(format!("stretch ratio must be >= 1, got {ratio}")));
        }
        if ratio == 1.0 || n == 1 {
            return Self::uniform(q_max, n);
        }
        let r = ratio.powf(1.0 / (n - 1) as f64);
        let total = (r.powi(n as i32) - 1.0) / (r - 1.0);
        let mut faces = Vec::with_capacity(n + 1);
        faces.push(0.0);
        let mut width = q_max / total;
        let mut edge = 0.0;
        for _ in 0..n - 1 {
            edge += width;
            faces.push(edge);
            width *= r;
        }
        faces.push(q_max);
        Ok(Self::from_faces(faces))
    }

    fn check(q_max: f64, n: usize) -> Result<()> {
        if !(q_max.is_finite() && q_max > 0.0) {
            return Err(Error::Domain(format!("q_max must be positive, got {q_max}")));
        }
        if n < 2 {
            return Err(Error::Domain(format!("grid needs at least 2 cells, got {n}")));
        }
        Ok(())
    }

    fn from_faces(faces: Vec<f64>) -> Self {
        let centers = faces.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let centroids = faces
            .windows(2)
            .map(|w| 0.75 * (w[1].powi(4) - w[0].powi(4)) / (w[1].powi(3) - w[0].powi(3)))
            .collect();
        let vol_weights = faces
            .windows(2)
            .map(|w| 4.0 * PI * (w[1].powi(3) - w[0].powi(3)) / 3.0)
            .collect();
        let moment_weights = faces
            .windows(2)
            .map(|w| PI * (w[1].powi(4) - w[0].powi(4)))
            .collect();
        Self {
            faces,
            centers,
            centroids,
            vol_weights,
            moment_weights,
        }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn q_max(&self) -> f64 {
        *self.faces.last().expect("grid has faces")
    }

    pub fn faces(&self) -> &[f64] {
        &self.faces
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// `q^2`-weighted cell centroids. A linear function's cell averages equal
    /// its values there, so the flux differences use these as nodes.
    pub fn centroids(&self) -> &[f64] {
        &self.centroids
    }

    /// `4 pi \int_cell q^2 dq`
    pub fn vol_weights(&self) -> &[f64] {
        &self.vol_weights
    }

    /// `4 pi \int_cell q^3 dq`
    pub fn moment_weights(&self) -> &[f64] {
        &self.moment_weights
    }

    /// Volume-weighted cell averages of `profile`, by 5-point Gauss-Legendre
    /// on each cell.
    pub fn cell_averages<P: RadialProfile + ?Sized>(&self, profile: &P) -> Vec<f64> {
        const X: [f64; 5] = [
            -0.906_179_845_938_664,
            -0.538_469_310_105_683,
            0.0,
            0.538_469_310_105_683,
            0.906_179_845_938_664,
        ];
        const W: [f64; 5] = [
            0.236_926_885_056_189_1,
            0.478_628_670_499_366_5,
            0.568_888_888_888_888_9,
            0.478_628_670_499_366_5,
            0.236_926_885_056_189_1,
        ];
        self.faces
            .windows(2)
            .map(|w| {
                let (c, h) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
                let (mut num, mut den) = (0.0, 0.0);
                for (x, wt) in X.iter().zip(W) {
                    let q = c + h * x;
                    num += wt * q * q * profile.eval(q);
                    den += wt * q * q;
                }
                num / den
            })
            .collect()
    }
}

/// Cell-average density at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityState {
    pub t: f64,
    pub values: Vec<f64>,
}

impl DensityState {
    pub fn zeros(grid: &RadialGrid) -> Self {
        Self {
            t: 0.0,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_profile<P: RadialProfile + ?Sized>(grid: &RadialGrid, profile: &P) -> Self {
        Self {
            t: 0.0,
            values: grid.cell_averages(profile),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Linear interpolation between centroids; constant beyond the first
    /// and last node.
    pub fn value_at(&self, grid: &RadialGrid, q: f64) -> f64 {
        let x = grid.centroids();
        let k = x.partition_point(|&c| c <= q);
        if k == 0 {
            return self.values[0];
        }
        if k == x.len() {
            return self.values[x.len() - 1];
        }
        let u = (q - x[k - 1]) / (x[k] - x[k - 1]);
        (1.0 - u) * self.values[k - 1] + u * self.values[k]
    }

    /// Fails if some entry is below `-1e-12 * max|f|` or not finite.
    pub fn check_nonnegative(&self) -> Result<()> {
        let floor = -1e-12 * self.max_abs();
        match self
            .values
            .iter()
            .position(|&v| !v.is_finite() || v < floor)
        {
            None => Ok(()),
            Some(j) => Err(Error::Domain(format!(
                "density entry {j} is {} (below {floor:e})",
                self.values[j]
            ))),
        }
    }
}

/// Face coefficients of the tridiagonal operator: `(L f)_j` equals
/// `(w[j+1] (f[j+1] - f[j]) - w[j] (f[j] - f[j-1])) / V_j` with
/// `w[0] = w[n] = 0`.
#[derive(Debug, Clone)]
pub struct RadialOperator {
    face_weights: Vec<f64>,
}

impl RadialOperator {
    pub fn new(grid: &RadialGrid, fv: &FieldValue, mode: Mode, sigma: f64) -> Self {
        let n = grid.len();
        let e2 = fv.exp2phi();
        let (c, q) = (grid.centroids(), grid.faces());
        let mut w = vec![0.0; n + 1];
        for j in 1..n {
            let dc = c[j] - c[j - 1];
            let qf = q[j];
            // Relativistic: Psi_f * (S_j - S_{j-1}) = q_f * dc with S taken at
            // the nodes, which makes the discrete energy balance exact; it is a
            // second-order approximation of S(q_f).
            let psi = match mode {
                Mode::Relativistic => {
                    let (sl, sr) = ((e2 + c[j - 1].powi(2)).sqrt(), (e2 + c[j].powi(2)).sqrt());
                    qf * (sr + sl) / (c[j] + c[j - 1])
                }
                Mode::Ultra => qf,
            };
            w[j] = sigma * e2 * 4.0 * PI * qf * qf * psi / dc;
        }
        Self { face_weights: w }
    }

    pub fn face_weights(&self) -> &[f64] {
        &self.face_weights
    }

    pub fn apply_into(&self, grid: &RadialGrid, f: &[f64], out: &mut [f64]) {
        let w = &self.face_weights;
        let v = grid.vol_weights();
        let n = f.len();
        for j in 0..n {
            let right = if j + 1 < n { w[j + 1] * (f[j + 1] - f[j]) } else { 0.0 };
            let left = if j > 0 { w[j] * (f[j] - f[j - 1]) } else { 0.0 };
            out[j] = (right - left) / v[j];
        }
    }

    pub fn apply(&self, grid: &RadialGrid, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        self.apply_into(grid, f, &mut out);
        out
    }
}

/// `e^{2 phi} q^{-2} d_q(q^2 Psi d_q f)` on every cell (unit diffusion scale).
pub fn radial_operator_apply(
    f: &DensityState,
    fv: &FieldValue,
    grid: &RadialGrid,
    mode: Mode,
) -> Vec<f64> {
    RadialOperator::new(grid, fv, mode, 1.0).apply(grid, &f.values)
}

/// Reusable theta-scheme integrator; owns the tridiagonal scratch space.
#[derive(Debug, Clone)]
pub struct ThetaStepper {
    pub theta: f64,
    pub mode: Mode,
    pub sigma: f64,
    rhs: Vec<f64>,
    c_prime: Vec<f64>,
}

impl ThetaStepper {
    pub fn new(theta: f64, mode: Mode, sigma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::Domain(format!("theta must lie in [0, 1], got {theta}")));
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::Domain(format!("sigma must be nonnegative, got {sigma}")));
        }
        Ok(Self {
            theta,
            mode,
            sigma,
            rhs: Vec::new(),
            c_prime: Vec::new(),
        })
    }

    /// Solves `(I - theta dt L) f' = (I + (1 - theta) dt L) f` in place.
    pub fn step(&mut self, grid: &RadialGrid, f: &mut [f64], fv_mid: &FieldValue, dt: f64) -> Result<()> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Domain(format!("dt must be positive, got {dt}")));
        }
        let n = grid.len();
        if f.len() != n {
            return Err(Error::Domain(format!(
                "density has {} cells, grid has {n}",
                f.len()
            )));
        }
        let op = RadialOperator::new(grid, fv_mid, self.mode, self.sigma);
        let w = op.face_weights();
        let v = grid.vol_weights();
        self.rhs.resize(n, 0.0);
        self.c_prime.resize(n, 0.0);
        op.apply_into(grid, f, &mut self.rhs);
        // Solve for the increment, (I - theta dt L) delta = dt L f, so that
        // data annihilated by L is returned bit-for-bit.
        for r in self.rhs.iter_mut() {
            *r *= dt;
        }
        if self.theta > 0.0 {
            // Thomas algorithm on rows a_j x_{j-1} + b_j x_j + c_j x_{j+1} = r_j.
            let k = self.theta * dt;
            let mut prev_c = 0.0;
            for j in 0..n {
                let a = -k * w[j] / v[j];
                let c = -k * w[j + 1] / v[j];
                let b = 1.0 + k * (w[j] + w[j + 1]) / v[j];
                let pivot = b - a * prev_c;
                if !(pivot.is_finite() && pivot.abs() > f64::MIN_POSITIVE) {
                    return Err(Error::Numerical(format!("singular tridiagonal system at row {j}")));
                }
                let prev_r = if j > 0 { self.rhs[j - 1] } else { 0.0 };
                self.c_prime[j] = c / pivot;
                self.rhs[j] = (self.rhs[j] - a * prev_r) / pivot;
                prev_c = self.c_prime[j];
            }
            for j in (0..n - 1).rev() {
                self.rhs[j] -= self.c_prime[j] * self.rhs[j + 1];
            }
        }
        for (fj, d) in f.iter_mut().zip(&self.rhs) {
            *fj += d;
        }
        Ok(())
    }
}

/// One theta-scheme step with unit diffusion scale.
pub fn step_theta(
    f: &DensityState,
    fv_mid: &FieldValue,
    dt: f64,
    grid: &RadialGrid,
    theta: f64,
    mode: Mode,
) -> Result<DensityState> {
    let mut out = f.clone();
    ThetaStepper::new(theta, mode, 1.0)?.step(grid, &mut out.values, fv_mid, dt)?;
    out.t += dt;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mass: f64,
    pub l2: f64,
    pub first_abs_moment: f64,
    /// `4 pi \int (e^{2 phi} + q^2)^{1/2} f q^2 dq`
    pub weighted_half: f64,
}

pub fn moments(f: &DensityState, grid: &RadialGrid, fv: &FieldValue) -> Moments {
    let v = grid.vol_weights();
    let m = grid.moment_weights();
    let mut out = Moments {
        mass: 0.0,
        l2: 0.0,
        first_abs_moment: 0.0,
        weighted_half: weighted_moment(&f.values, grid, fv, 0.5),
    };
    for (j, &fj) in f.values.iter().enumerate() {
        out.mass += v[j] * fj;
        out.l2 += v[j] * fj * fj;
        out.first_abs_moment += m[j] * fj;
    }
    out.l2 = out.l2.sqrt();
    out
}

/// `(\sum V_j |f_j|^gamma)^{1/gamma}`; `gamma = inf` gives the max norm.
pub fn lq_norm(f: &[f64], grid: &RadialGrid, gamma: f64) -> f64 {
    if gamma.is_infinite() {
        return f.iter().fold(0.0, |m, v| m.max(v.abs()));
    }
    let s: f64 = f
        .iter()
        .zip(grid.vol_weights())
        .map(|(fj, vj)| vj * fj.abs().powf(gamma))
        .sum();
    s.powf(1.0 / gamma)
}

/// `4 pi \int (e^{2 phi} + q^2)^gamma f q^2 dq` with the weight taken at centroids.
pub fn weighted_moment(f: &[f64], grid: &RadialGrid, fv: &FieldValue, gamma: f64) -> f64 {
    let e2 = fv.exp2phi();
    f.iter()
        .zip(grid.vol_weights().iter().zip(grid.centroids()))
        .map(|(fj, (vj, cj))| vj * (e2 + cj * cj).powf(gamma) * fj)
        .sum()
}

/// Volume of `{q : f(q) > eps}`.
pub fn nonvanishing_measure(f: &DensityState, eps: f64, grid: &RadialGrid) -> f64 {
    f.values
        .iter()
        .zip(grid.vol_weights())
        .filter(|(fj, _)| **fj > eps)
        .map(|(_, vj)| vj)
        .sum()
}

/// Density in the last cell relative to the largest entry; monitors the
/// reflecting cutoff at `q_max`.
pub fn boundary_density(f: &DensityState) -> f64 {
    let max = f.max_abs();
    if max == 0.0 {
        0.0
    } else {
        f.values.last().map_or(0.0, |v| v.abs() / max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{DiffusionTensors, MomentumPoint};
    use crate::profile::Profile;
    use approx::assert_relative_eq;
    use nalgebra::{Matrix3, Vector3};

    fn closed_form(t: f64, q: f64) -> f64 {
        (-q / (1.0 + t)).exp() / (1.0 + t).powi(3)
    }

    #[test]
    fn grid_invariants() {
        for grid in [
            RadialGrid::uniform(40.0, 4000).unwrap(),
            RadialGrid::stretched(40.0, 500, 20.0).unwrap(),
        ] {
            assert!(grid.faces().windows(2).all(|w| w[1] > w[0]));
            assert_eq!(grid.faces()[0], 0.0);
            assert_eq!(grid.q_max(), 40.0);
            assert!(grid.vol_weights().iter().all(|&v| v > 0.0));
            let total: f64 = grid.vol_weights().iter().sum();
            assert_relative_eq!(total, 4.0 * PI / 3.0 * 40f64.powi(3), max_relative = 1e-12);
        }
        let s = RadialGrid::stretched(10.0, 100, 20.0).unwrap();
        let w = s.faces();
        assert_relative_eq!((w[100] - w[99]) / (w[1] - w[0]), 20.0, max_relative = 1e-10);
        assert!(RadialGrid::uniform(0.0, 10).is_err());
        assert!(RadialGrid::uniform(1.0, 1).is_err());
        assert!(RadialGrid::stretched(1.0, 10, 0.5).is_err());
    }

    #[test]
    fn moments_of_exponential() {
        let grid = RadialGrid::uniform(40.0, 4000).unwrap();
        let f = DensityState::from_profile(&grid, &Profile::exp());
        let m = moments(&f, &grid, &FieldValue::new(0.0));
        assert_relative_eq!(m.mass, 8.0 * PI, max_relative = 1e-6);
        // 4 pi \int q^3 e^{-q} = 24 pi, 4 pi \int q^2 e^{-2q} = pi
        assert_relative_eq!(m.first_abs_moment, 24.0 * PI, max_relative = 1e-5);
        assert_relative_eq!(m.l2, PI.sqrt(), max_relative = 1e-5);
        let zero = moments(&DensityState::zeros(&grid), &grid, &FieldValue::new(0.0));
        assert_eq!((zero.mass, zero.l2, zero.first_abs_moment, zero.weighted_half), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn nonvanishing_of_monotone_profile() {
        let grid = RadialGrid::uniform(40.0, 4000).unwrap();
        let values = grid.centers().iter().map(|q| (-q).exp()).collect();
        let f = DensityState { t: 0.0, values };
        let mu = nonvanishing_measure(&f, (-1f64).exp(), &grid);
        assert_relative_eq!(mu, 4.0 * PI / 3.0, max_relative = 1e-12);
        assert_eq!(nonvanishing_measure(&DensityState::zeros(&grid), 1e-30, &grid), 0.0);
    }

    #[test]
    fn ultra_operator_on_polynomials() {
        let grid = RadialGrid::uniform(10.0, 200).unwrap();
        let fv = FieldValue::new(0.0);
        let c = grid.centroids();
        let lin = DensityState { t: 0.0, values: c.to_vec() };
        let l = radial_operator_apply(&lin, &fv, &grid, Mode::Ultra);
        for v in &l[..199] {
            assert_relative_eq!(*v, 3.0, max_relative = 1e-12);
        }
        let sq = DensityState { t: 0.0, values: c.iter().map(|q| q * q).collect() };
        let l = radial_operator_apply(&sq, &fv, &grid, Mode::Ultra);
        let h = 10.0 / 200.0;
        for j in 1..199 {
            // Leading error is 4 h^2 / (3 q).
            assert!((l[j] - 8.0 * c[j]).abs() < 1.5 * h * h / c[j], "cell {j}: {} vs {}", l[j], 8.0 * c[j]);
        }
    }

    #[test]
    fn constants_are_fixed_points() {
        let grid = RadialGrid::stretched(20.0, 300, 5.0).unwrap();
        let f = DensityState { t: 0.0, values: vec![0.7; 300] };
        for mode in [Mode::Relativistic, Mode::Ultra] {
            for theta in [0.0, 0.5, 1.0] {
                let g = step_theta(&f, &FieldValue::new(0.3), 0.1, &grid, theta, mode).unwrap();
                assert!(g.values.iter().all(|&v| v == 0.7));
            }
        }
    }

    /// `e^{2 phi} div(D grad f)` for radial `f = e^{-q}`, built from the
    /// three-dimensional tensors rather than the radial reduction.
    fn cartesian_operator(phi: f64, q: f64) -> f64 {
        let fv = FieldValue::new(phi);
        let dir = Vector3::new(0.48, -0.6, 0.64);
        let mp = MomentumPoint::new(dir * q);
        let t = DiffusionTensors::evaluate(&fv, &mp);
        let e = (-q).exp();
        let grad = -e * dir;
        let proj = dir * dir.transpose();
        let hess = e * (proj - (Matrix3::identity() - proj) / q);
        let mut div_d = Vector3::zeros();
        for j in 0..3 {
            for i in 0..3 {
                div_d[j] += t.d_grad[i][(i, j)];
            }
        }
        fv.exp2phi() * ((t.d.transpose() * hess).trace() + div_d.dot(&grad))
    }

    #[test]
    fn relativistic_operator_matches_cartesian_form() {
        for phi in [-1.0, 0.0, 0.5] {
            let mut errs = Vec::new();
            for n in [400, 800] {
                let grid = RadialGrid::uniform(20.0, n).unwrap();
                let f = DensityState { t: 0.0, values: grid.centroids().iter().map(|q| (-q).exp()).collect() };
                let l = radial_operator_apply(&f, &FieldValue::new(phi), &grid, Mode::Relativistic);
                let err = grid
                    .centroids()
                    .iter()
                    .zip(&l)
                    .filter(|(q, _)| **q > 0.5 && **q < 15.0)
                    .map(|(q, v)| (v - cartesian_operator(phi, *q)).abs())
                    .fold(0.0, f64::max);
                errs.push(err);
            }
            assert!(errs[0] < 2e-2, "phi={phi}: {errs:?}");
            let ratio = errs[0] / errs[1];
            assert!((3.4..4.5).contains(&ratio), "phi={phi}: ratio {ratio}");
        }
    }

    #[test]
    fn energy_consistent_faces_are_second_order_close_to_pointwise() {
        let grid = RadialGrid::uniform(10.0, 1000).unwrap();
        let fv = FieldValue::new(0.2);
        let op = RadialOperator::new(&grid, &fv, Mode::Relativistic, 1.0);
        let h = 0.01;
        for j in 1..grid.len() {
            let q = grid.faces()[j];
            let pointwise = fv.exp2phi() * 4.0 * PI * q * q * (fv.exp2phi() + q * q).sqrt() / h;
            assert_relative_eq!(op.face_weights()[j], pointwise, max_relative = h * h / (q * q));
        }
    }

    fn ultra_run(n: usize, steps: usize, t_end: f64) -> f64 {
        let grid = RadialGrid::uniform(60.0, n).unwrap();
        let mut f = DensityState::from_profile(&grid, &Profile::exp());
        let mut stepper = ThetaStepper::new(0.5, Mode::Ultra, 1.0).unwrap();
        let dt = t_end / steps as f64;
        for _ in 0..steps {
            stepper.step(&grid, &mut f.values, &FieldValue::new(0.0), dt).unwrap();
        }
        let exact = grid.cell_averages(&crate::profile::FnProfile::new(|q| closed_form(t_end, q), 60.0));
        f.values.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn ultra_step_matches_closed_form_with_second_order() {
        let coarse = ultra_run(600, 50, 0.5);
        let fine = ultra_run(1200, 100, 0.5);
        assert!(coarse < 1e-3, "coarse error {coarse}");
        let ratio = coarse / fine;
        // The origin cell carries a weak logarithmic correction, so the
        // observed ratio approaches 4 from below.
        assert!((3.1..4.7).contains(&ratio), "ratio {ratio} ({coarse}, {fine})");
    }

    #[test]
    fn relativistic_step_halving() {
        // Richardson: successive differences shrink by 2^p with p = 2 for
        // theta = 1/2. The datum must be smooth at the origin in three
        // dimensions, which rules out e^{-q}.
        let grid = RadialGrid::uniform(12.0, 600).unwrap();
        let f0 = DensityState::from_profile(&grid, &Profile::Gaussian { amplitude: 1.0, rate: 1.0 });
        let fv = FieldValue::new(0.0);
        let run = |steps: usize| {
            let mut s = ThetaStepper::new(0.5, Mode::Relativistic, 1.0).unwrap();
            let mut f = f0.values.clone();
            for _ in 0..steps {
                s.step(&grid, &mut f, &fv, 0.2 / steps as f64).unwrap();
            }
            f
        };
        let (a, b, c) = (run(10), run(20), run(40));
        let d1 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let d2 = b.iter().zip(&c).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let ratio = d1 / d2;
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn mass_conserved_and_norms_nonexpanding_for_implicit_scheme() {
        let grid = RadialGrid::stretched(40.0, 800, 8.0).unwrap();
        let mut f = DensityState::from_profile(&grid, &Profile::Gaussian { amplitude: 3.0, rate: 2.0 });
        let m0 = moments(&f, &grid, &FieldValue::new(0.0)).mass;
        let mut prev = [lq_norm(&f.values, &grid, 2.0), lq_norm(&f.values, &grid, 4.0)];
        let mut stepper = ThetaStepper::new(1.0, Mode::Relativistic, 1.0).unwrap();
        for k in 0..200 {
            let fv = FieldValue::new(-0.01 * k as f64);
            stepper.step(&grid, &mut f.values, &fv, 0.05).unwrap();
            let m = moments(&f, &grid, &fv).mass;
            assert_relative_eq!(m, m0, max_relative = 1e-12);
            let now = [lq_norm(&f.values, &grid, 2.0), lq_norm(&f.values, &grid, 4.0)];
            for (a, b) in now.iter().zip(&prev) {
                assert!(*a <= b * (1.0 + 1e-10), "norm grew at step {k}: {a} > {b}");
            }
            prev = now;
            assert!(f.values.iter().all(|&v| v >= -1e-10 * 3.0));
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let grid = RadialGrid::uniform(1.0, 4).unwrap();
        let f = DensityState::zeros(&grid);
        assert!(step_theta(&f, &FieldValue::new(0.0), 0.0, &grid, 0.5, Mode::Ultra).is_err());
        assert!(step_theta(&f, &FieldValue::new(0.0), 0.1, &grid, 1.5, Mode::Ultra).is_err());
        let bad = DensityState { t: 0.0, values: vec![1.0, -0.1, 0.0, 0.0] };
        assert!(bad.check_nonnegative().is_err());
        assert!(boundary_density(&bad) == 0.0);
    }

    #[test]
    fn mode_round_trips_through_strings() {
        for m in [Mode::Relativistic, Mode::Ultra] {
            assert_eq!(m.to_string().parse::<Mode>().unwrap(), m);
        }
        assert!("newtonian".parse::<Mode>().is_err());
    }
}
