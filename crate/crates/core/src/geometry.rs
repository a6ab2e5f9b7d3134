//! Point evaluation of the field-dependent diffusion matrix
//! `D[phi] = (e^{2 phi} I + p p^T) / sqrt(e^{2 phi} + |p|^2)` and every
//! tensor derived from it: derivatives, Laplacian, the auxiliary matrices
//! `A` and `B`, the SDE drift `d` and the noise matrix `G` with
//! `G G^T = 2 e^{2 phi} D`.
//!
//! [`DiffusionTensors::evaluate`] computes the whole bundle in one pass so the
//! shared root `sqrt(e^{2 phi} + |p|^2)` is taken once.

use nalgebra::{Matrix3, Vector3};

/// Nordström potential with its cached conformal factor `e^{2 phi}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldValue {
    phi: f64,
    exp2phi: f64,
}

impl FieldValue {
    pub fn new(phi: f64) -> Self {
        Self {
            phi,
            exp2phi: (2.0 * phi).exp(),
        }
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn exp2phi(&self) -> f64 {
        self.exp2phi
    }

    pub fn exp_phi(&self) -> f64 {
        self.phi.exp()
    }
}

/// Momentum vector with its cached magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentumPoint {
    p: Vector3<f64>,
    q: f64,
}

impl MomentumPoint {
    pub fn new(p: Vector3<f64>) -> Self {
        Self { p, q: p.norm() }
    }

    pub fn from_array(p: [f64; 3]) -> Self {
        Self::new(Vector3::from(p))
    }

    pub fn p(&self) -> &Vector3<f64> {
        &self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }
}

/// Third-order array `t[k][(i, j)]` holding `d/dp^k` of a matrix entry.
pub type Grad3 = [Matrix3<f64>; 3];
/// Fourth-order array `t[k][l][(i, j)]` holding `d^2/dp^k dp^l`.
pub type Hess3 = [[Matrix3<f64>; 3]; 3];

#[derive(Debug, Clone)]
pub struct DiffusionTensors {
    pub d: Matrix3<f64>,
    pub d_grad: Grad3,
    pub d_hess: Hess3,
    pub d_lap: Matrix3<f64>,
    pub a: Matrix3<f64>,
    pub b: Matrix3<f64>,
    pub drift: Vector3<f64>,
    pub noise: Matrix3<f64>,
}

/// Common subexpressions at one `(phi, p)`.
#[derive(Debug, Clone, Copy)]
struct Shared {
    e2: f64,
    e1: f64,
    s2: f64,
    s: f64,
}

impl Shared {
    fn new(fv: &FieldValue, mp: &MomentumPoint) -> Self {
        let e2 = fv.exp2phi;
        let s2 = e2 + mp.q * mp.q;
        Self {
            e2,
            e1: fv.exp_phi(),
            s2,
            s: s2.sqrt(),
        }
    }
}

fn delta(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        0.0
    }
}

fn d_matrix(sh: &Shared, p: &Vector3<f64>) -> Matrix3<f64> {
    (Matrix3::identity() * sh.e2 + p * p.transpose()) / sh.s
}

fn d_gradient(sh: &Shared, p: &Vector3<f64>, d: &Matrix3<f64>) -> Grad3 {
    std::array::from_fn(|k| {
        Matrix3::from_fn(|i, j| {
            (delta(i, k) * p[j] + delta(j, k) * p[i]) / sh.s - d[(i, j)] * p[k] / sh.s2
        })
    })
}

fn d_hessian(sh: &Shared, p: &Vector3<f64>, d: &Matrix3<f64>, grad: &Grad3) -> Hess3 {
    let s3 = sh.s2 * sh.s;
    let s4 = sh.s2 * sh.s2;
    std::array::from_fn(|k| {
        std::array::from_fn(|l| {
            Matrix3::from_fn(|i, j| {
                (delta(i, k) * delta(j, l) + delta(j, k) * delta(i, l)) / sh.s
                    - (delta(i, k) * p[j] + delta(j, k) * p[i]) * p[l] / s3
                    - grad[l][(i, j)] * p[k] / sh.s2
                    - d[(i, j)] * delta(k, l) / sh.s2
                    + 2.0 * d[(i, j)] * p[k] * p[l] / s4
            })
        })
    })
}

impl DiffusionTensors {
    pub fn evaluate(fv: &FieldValue, mp: &MomentumPoint) -> Self {
        let sh = Shared::new(fv, mp);
        let p = &mp.p;
        let q2 = mp.q * mp.q;
        let d = d_matrix(&sh, p);
        let d_grad = d_gradient(&sh, p, &d);
        let d_hess = d_hessian(&sh, p, &d, &d_grad);
        let d_lap = d_hess[0][0] + d_hess[1][1] + d_hess[2][2];
        let s3 = sh.s2 * sh.s;
        let a = Matrix3::identity() * (q2 / s3);
        let b = p * p.transpose() * (2.0 / s3) - d * (q2 / (sh.s2 * sh.s2));
        Self {
            d,
            d_grad,
            d_hess,
            d_lap,
            a,
            b,
            drift: drift_from(&sh, p),
            noise: noise_from(&sh, p),
        }
    }
}

fn drift_from(sh: &Shared, p: &Vector3<f64>) -> Vector3<f64> {
    p * (3.0 * sh.e2 / sh.s)
}

fn noise_from(sh: &Shared, p: &Vector3<f64>) -> Matrix3<f64> {
    let c = std::f64::consts::SQRT_2 * sh.e1 / sh.s.sqrt();
    let b = 1.0 / (sh.e1 + sh.s);
    (Matrix3::identity() * sh.e1 + p * p.transpose() * b) * c
}

/// `D[phi](p)`.
pub fn diffusion_matrix(fv: &FieldValue, mp: &MomentumPoint) -> Matrix3<f64> {
    d_matrix(&Shared::new(fv, mp), &mp.p)
}

/// Full tensor bundle; alias of [`DiffusionTensors::evaluate`].
pub fn diffusion_derivatives(fv: &FieldValue, mp: &MomentumPoint) -> DiffusionTensors {
    DiffusionTensors::evaluate(fv, mp)
}

/// `d^i = e^{2 phi} d_j D^{ij} = 3 e^{2 phi} p^i / sqrt(e^{2 phi} + |p|^2)`.
pub fn drift_vector(fv: &FieldValue, mp: &MomentumPoint) -> Vector3<f64> {
    drift_from(&Shared::new(fv, mp), &mp.p)
}

/// Symmetric positive-definite square root of `2 e^{2 phi} D[phi]`.
pub fn noise_matrix(fv: &FieldValue, mp: &MomentumPoint) -> Matrix3<f64> {
    noise_from(&Shared::new(fv, mp), &mp.p)
}

/// Drift and noise together, as used by the path integrator.
pub fn sde_coefficients(fv: &FieldValue, mp: &MomentumPoint) -> (Vector3<f64>, Matrix3<f64>) {
    let sh = Shared::new(fv, mp);
    (drift_from(&sh, &mp.p), noise_from(&sh, &mp.p))
}

/// `d_j d^i = 3 e^{2 phi} (delta^{ij} / s - p^i p^j / s^3)`.
pub fn drift_jacobian(fv: &FieldValue, mp: &MomentumPoint) -> Matrix3<f64> {
    let sh = Shared::new(fv, mp);
    let p = &mp.p;
    (Matrix3::identity() / sh.s - p * p.transpose() / (sh.s2 * sh.s)) * (3.0 * sh.e2)
}

/// `d/dp^k G^{ij}`, indexed `[k][(i, j)]`.
pub fn noise_gradient(fv: &FieldValue, mp: &MomentumPoint) -> Grad3 {
    let sh = Shared::new(fv, mp);
    let p = &mp.p;
    let c = std::f64::consts::SQRT_2 * sh.e1 / sh.s.sqrt();
    let dc = -0.5 * c / sh.s;
    let b = 1.0 / (sh.e1 + sh.s);
    let db = -b * b;
    std::array::from_fn(|k| {
        let ds = p[k] / sh.s;
        Matrix3::from_fn(|i, j| {
            dc * ds * (sh.e1 * delta(i, j) + b * p[i] * p[j])
                + c * (db * ds * p[i] * p[j] + b * (delta(i, k) * p[j] + delta(j, k) * p[i]))
        })
    })
}

/// `d/dp^l (d_i d_k D^{ij})`, indexed `[l][(j, k)]`. The divergence
/// `d_i D^{ij} = 3 p^j / s` makes this a short closed form.
pub fn divergence_hessian(fv: &FieldValue, mp: &MomentumPoint) -> Grad3 {
    let sh = Shared::new(fv, mp);
    let p = &mp.p;
    let s3 = sh.s2 * sh.s;
    let s5 = s3 * sh.s2;
    std::array::from_fn(|l| {
        Matrix3::from_fn(|j, k| {
            -3.0 * delta(j, k) * p[l] / s3
                - 3.0 * (delta(j, l) * p[k] + delta(k, l) * p[j]) / s3
                + 9.0 * p[j] * p[k] * p[l] / s5
        })
    })
}

/// Each Appendix estimate, divided by its `phi`-dependent shape, at one point.
/// Bounding these ratios by constants over a sweep certifies the estimates.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AppendixRatios {
    /// `max |d_k D^{ij}|`
    pub d_grad: f64,
    /// `max |d_k d_l D^{ij}| / e^{-phi}`
    pub d_hess: f64,
    /// `max |d_l (d_i d_k D^{ij})| / e^{-2 phi}`
    pub div_hess_grad: f64,
    /// largest eigenvalue of `B` over `e^{-phi}`
    pub b_form: f64,
    /// largest eigenvalue of `Lap D` over `e^{-phi}`
    pub lap_form: f64,
    /// `max |d_j d^i|`
    pub drift_jac: f64,
    /// `max |d_k G^{ij}| / e^{phi/2}`
    pub noise_grad: f64,
    /// `|D| / sqrt(e^{2 phi} + |p|^2)` with `|.|` the largest entry
    pub d_entry: f64,
}

impl AppendixRatios {
    pub fn at(fv: &FieldValue, mp: &MomentumPoint) -> Self {
        let t = DiffusionTensors::evaluate(fv, mp);
        let e_phi = fv.exp_phi();
        let s = (fv.exp2phi + mp.q * mp.q).sqrt();
        let max_abs = |m: &Matrix3<f64>| m.amax();
        let max_eig = |m: &Matrix3<f64>| {
            m.symmetric_eigenvalues()
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max)
        };
        Self {
            d_grad: t.d_grad.iter().map(max_abs).fold(0.0, f64::max),
            d_hess: t
                .d_hess
                .iter()
                .flatten()
                .map(max_abs)
                .fold(0.0, f64::max)
                * e_phi,
            div_hess_grad: divergence_hessian(fv, mp)
                .iter()
                .map(max_abs)
                .fold(0.0, f64::max)
                * fv.exp2phi,
            b_form: max_eig(&t.b).max(0.0) * e_phi,
            lap_form: max_eig(&t.d_lap).max(0.0) * e_phi,
            drift_jac: max_abs(&drift_jacobian(fv, mp)),
            noise_grad: noise_gradient(fv, mp)
                .iter()
                .map(max_abs)
                .fold(0.0, f64::max)
                / (0.5 * fv.phi).exp(),
            d_entry: max_abs(&t.d) / s,
        }
    }

    pub fn max(self, other: Self) -> Self {
        Self {
            d_grad: self.d_grad.max(other.d_grad),
            d_hess: self.d_hess.max(other.d_hess),
            div_hess_grad: self.div_hess_grad.max(other.div_hess_grad),
            b_form: self.b_form.max(other.b_form),
            lap_form: self.lap_form.max(other.lap_form),
            drift_jac: self.drift_jac.max(other.drift_jac),
            noise_grad: self.noise_grad.max(other.noise_grad),
            d_entry: self.d_entry.max(other.d_entry),
        }
    }

    /// Names and values in a fixed order, for reporting.
    pub fn entries(&self) -> [(&'static str, f64); 8] {
        [
            ("|dD| <= C", self.d_grad),
            ("|d2D| <= C e^-phi", self.d_hess),
            ("|grad(d_i d_k D^ij)| <= C e^-2phi", self.div_hess_grad),
            ("B x.x <= C e^-phi |x|^2", self.b_form),
            ("LapD x.x <= C e^-phi |x|^2", self.lap_form),
            ("|d_j d^i| <= C", self.drift_jac),
            ("|d_k G^ij| <= C e^phi/2", self.noise_grad),
            ("|D^ij| <= sqrt(e^2phi+|p|^2)", self.d_entry),
        ]
    }
}

/// Ratios for the two field-difference estimates:
/// `|e^{2 phi1} D[phi1] - e^{2 phi2} D[phi2]| / (sqrt(1+|p|^2) |phi1 - phi2|)`
/// and `|d_i(e^{2 phi1} D^{ij}[phi1] - e^{2 phi2} D^{ij}[phi2])| / |phi1 - phi2|`.
pub fn lipschitz_ratios(phi1: f64, phi2: f64, mp: &MomentumPoint) -> (f64, f64) {
    let (f1, f2) = (FieldValue::new(phi1), FieldValue::new(phi2));
    let dphi = (phi1 - phi2).abs();
    if dphi == 0.0 {
        return (0.0, 0.0);
    }
    let m = diffusion_matrix(&f1, mp) * f1.exp2phi - diffusion_matrix(&f2, mp) * f2.exp2phi;
    let v = drift_vector(&f1, mp) - drift_vector(&f2, mp);
    (
        m.amax() / ((1.0 + mp.q * mp.q).sqrt() * dphi),
        v.amax() / dphi,
    )
}

/// Frozen constants for [`AppendixRatios`] on `phi in [-10, 2]`,
/// `|p| <= 100`, each about 10% above the sweep maximum.
pub const APPENDIX_CONSTANTS: AppendixRatios = AppendixRatios {
    d_grad: 1.2,
    d_hess: 1.2,
    div_hess_grad: 2.85,
    b_form: 0.43,
    lap_form: 1.07,
    drift_jac: 24.5,
    noise_grad: 0.65,
    // Exact bound; the margin only absorbs round-off.
    d_entry: 1.0 + 1e-12,
};

/// Frozen constants for [`lipschitz_ratios`] with both fields at most 2:
/// the mean-value bounds `3 e^6` and `6 e^4` of the two `phi`-derivatives,
/// plus 10%. The sweep maxima are 592 and 247.
pub const LIPSCHITZ_CONSTANTS: (f64, f64) = (1332.0, 360.0);

/// Deterministic sweep over `phi in [phi_lo, phi_hi]`, `|p| in [0, q_hi]`:
/// a tensor grid of `n_phi * n_q` magnitudes, each with a direction taken
/// from a low-discrepancy spherical sequence.
pub fn sweep_points(
    n_phi: usize,
    n_q: usize,
    (phi_lo, phi_hi): (f64, f64),
    q_hi: f64,
) -> Vec<(FieldValue, MomentumPoint)> {
    let golden = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut out = Vec::with_capacity(n_phi * n_q);
    for i in 0..n_phi {
        let phi = phi_lo + (phi_hi - phi_lo) * i as f64 / (n_phi.max(2) - 1) as f64;
        let fv = FieldValue::new(phi);
        for j in 0..n_q {
            // Quadratic spacing in |p| resolves the region |p| ~ e^phi.
            let u = j as f64 / (n_q.max(2) - 1) as f64;
            let q = q_hi * u * u;
            let idx = (i * n_q + j) as f64 + 0.5;
            let z = 1.0 - 2.0 * ((idx * golden).fract());
            let az = 2.0 * std::f64::consts::PI * (idx * 0.754_877_666_246_692_7).fract();
            let r = (1.0 - z * z).max(0.0).sqrt();
            let dir = Vector3::new(r * az.cos(), r * az.sin(), z);
            out.push((fv, MomentumPoint::new(dir * q)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fd_step(mp: &MomentumPoint) -> f64 {
        1e-5 * mp.q().max(1.0)
    }

    fn shifted(mp: &MomentumPoint, k: usize, h: f64) -> MomentumPoint {
        let mut p = *mp.p();
        p[k] += h;
        MomentumPoint::new(p)
    }

    fn sample_points() -> Vec<(FieldValue, MomentumPoint)> {
        let mut pts = sweep_points(7, 9, (-3.0, 1.5), 6.0);
        pts.push((FieldValue::new(0.3), MomentumPoint::from_array([0.4, -1.2, 2.0])));
        pts
    }

    #[test]
    fn momentum_point_caches_norm() {
        let mp = MomentumPoint::from_array([3.0, 4.0, 12.0]);
        assert_eq!(mp.q(), 13.0);
        let fv = FieldValue::new(-0.7);
        assert_relative_eq!(fv.exp2phi(), (-1.4_f64).exp(), max_relative = 1e-15);
    }

    #[test]
    fn diffusion_at_origin() {
        let origin = MomentumPoint::from_array([0.0; 3]);
        let d = diffusion_matrix(&FieldValue::new(0.0), &origin);
        assert_eq!(d, Matrix3::identity());
        let phi = -1.3;
        let d = diffusion_matrix(&FieldValue::new(phi), &origin);
        assert_relative_eq!(d, Matrix3::identity() * phi.exp(), max_relative = 1e-15);
    }

    #[test]
    fn diffusion_on_unit_axis() {
        let d = diffusion_matrix(&FieldValue::new(0.0), &MomentumPoint::from_array([1.0, 0.0, 0.0]));
        // (I + e1 e1^T) / sqrt(2), entry by entry.
        let r = 1.0 / 2.0_f64.sqrt();
        let expected = Matrix3::new(2.0 * r, 0.0, 0.0, 0.0, r, 0.0, 0.0, 0.0, r);
        assert_relative_eq!(d, expected, max_relative = 1e-15);
    }

    #[test]
    fn derivatives_vanish_at_origin() {
        let t = diffusion_derivatives(&FieldValue::new(0.8), &MomentumPoint::from_array([0.0; 3]));
        for k in 0..3 {
            assert_eq!(t.d_grad[k], Matrix3::zeros());
        }
        assert_eq!(t.a, Matrix3::zeros());
        assert_eq!(t.b, Matrix3::zeros());
        assert_eq!(t.drift, Vector3::zeros());
    }

    #[test]
    fn matrix_a_on_unit_axis() {
        let t = diffusion_derivatives(&FieldValue::new(0.0), &MomentumPoint::from_array([1.0, 0.0, 0.0]));
        assert_relative_eq!(t.a, Matrix3::identity() / 2.0_f64.powf(1.5), max_relative = 1e-15);
        // A^j_k = p_i d_k D^{ij} / s^2, from finite differences of D.
        let fv = FieldValue::new(0.0);
        let mp = MomentumPoint::from_array([1.0, 0.0, 0.0]);
        let h = fd_step(&mp);
        for k in 0..3 {
            let dk = (diffusion_matrix(&fv, &shifted(&mp, k, h))
                - diffusion_matrix(&fv, &shifted(&mp, k, -h)))
                / (2.0 * h);
            let row = mp.p().transpose() * dk / 2.0;
            for j in 0..3 {
                assert!((row[j] - t.a[(j, k)]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        for (fv, mp) in sample_points() {
            let t = diffusion_derivatives(&fv, &mp);
            let h = fd_step(&mp);
            for k in 0..3 {
                let fd = (diffusion_matrix(&fv, &shifted(&mp, k, h))
                    - diffusion_matrix(&fv, &shifted(&mp, k, -h)))
                    / (2.0 * h);
                assert!((fd - t.d_grad[k]).amax() < 1e-8, "k={k} phi={}", fv.phi());
            }
        }
    }

    #[test]
    fn hessian_and_laplacian_match_central_differences() {
        for (fv, mp) in sample_points() {
            let t = diffusion_derivatives(&fv, &mp);
            let h = fd_step(&mp);
            for l in 0..3 {
                let plus = diffusion_derivatives(&fv, &shifted(&mp, l, h));
                let minus = diffusion_derivatives(&fv, &shifted(&mp, l, -h));
                for k in 0..3 {
                    let fd = (plus.d_grad[k] - minus.d_grad[k]) / (2.0 * h);
                    let scale = 1.0 + t.d_hess[k][l].amax();
                    assert!((fd - t.d_hess[k][l]).amax() < 1e-7 * scale);
                }
            }
            // Closed-form Laplacian.
            let e2 = fv.exp2phi();
            let s2 = e2 + mp.q() * mp.q();
            let s = s2.sqrt();
            let p = mp.p();
            let lap = (Matrix3::identity() * 2.0 - p * p.transpose() * (4.0 / s2)) / s
                - t.d * (3.0 * e2 / (s2 * s2));
            assert!((lap - t.d_lap).amax() < 1e-12 * (1.0 + lap.amax()));
        }
    }

    #[test]
    fn matrix_b_is_radial_derivative() {
        for (fv, mp) in sample_points() {
            let t = diffusion_derivatives(&fv, &mp);
            let s2 = fv.exp2phi() + mp.q() * mp.q();
            let mut expected = Matrix3::zeros();
            for k in 0..3 {
                expected += t.d_grad[k] * mp.p()[k];
            }
            expected /= s2;
            assert!((expected - t.b).amax() < 1e-13 * (1.0 + t.b.amax()));
        }
    }

    #[test]
    fn drift_on_unit_axis() {
        let d = drift_vector(&FieldValue::new(0.0), &MomentumPoint::from_array([1.0, 0.0, 0.0]));
        assert_relative_eq!(d, Vector3::new(3.0 / 2.0_f64.sqrt(), 0.0, 0.0), max_relative = 1e-15);
        let d0 = drift_vector(&FieldValue::new(1.0), &MomentumPoint::from_array([0.0; 3]));
        assert_eq!(d0, Vector3::zeros());
    }

    #[test]
    fn drift_is_weighted_divergence_of_d() {
        for (fv, mp) in sample_points() {
            let h = fd_step(&mp);
            let mut div = Vector3::zeros();
            for j in 0..3 {
                let dj = (diffusion_matrix(&fv, &shifted(&mp, j, h))
                    - diffusion_matrix(&fv, &shifted(&mp, j, -h)))
                    / (2.0 * h);
                for i in 0..3 {
                    div[i] += dj[(i, j)];
                }
            }
            let d = drift_vector(&fv, &mp);
            assert!((div * fv.exp2phi() - d).amax() < 1e-8 * (1.0 + d.amax()));
            assert!(d.norm() <= 3.0 * fv.exp2phi() * (1.0 + 1e-15));
        }
    }

    #[test]
    fn noise_at_origin() {
        let phi = 0.45;
        let g = noise_matrix(&FieldValue::new(phi), &MomentumPoint::from_array([0.0; 3]));
        let expected = Matrix3::identity() * (2.0_f64.sqrt() * (1.5 * phi).exp());
        assert_relative_eq!(g, expected, max_relative = 1e-15);
        assert_relative_eq!(g * g, Matrix3::identity() * (2.0 * (3.0 * phi).exp()), max_relative = 1e-14);
    }

    #[test]
    fn noise_squares_to_scaled_diffusion() {
        let fv = FieldValue::new(0.0);
        let mp = MomentumPoint::from_array([1.0, 0.0, 0.0]);
        let g = noise_matrix(&fv, &mp);
        let r = 1.0 / 2.0_f64.sqrt();
        let target = Matrix3::new(2.0 * r, 0.0, 0.0, 0.0, r, 0.0, 0.0, 0.0, r) * 2.0;
        assert_relative_eq!(g * g.transpose(), target, max_relative = 1e-14);
        for (fv, mp) in sweep_points(13, 31, (-10.0, 2.0), 100.0) {
            let g = noise_matrix(&fv, &mp);
            let target = diffusion_matrix(&fv, &mp) * (2.0 * fv.exp2phi());
            assert!((g * g.transpose() - target).amax() <= 1e-12 * target.amax());
            assert_eq!(g, g.transpose());
            let eig = g.symmetric_eigenvalues();
            assert!(eig.iter().all(|&l| l > 0.0));
        }
    }

    #[test]
    fn noise_gradient_matches_central_differences() {
        for (fv, mp) in sample_points() {
            let dg = noise_gradient(&fv, &mp);
            let h = fd_step(&mp);
            for k in 0..3 {
                let fd = (noise_matrix(&fv, &shifted(&mp, k, h)) - noise_matrix(&fv, &shifted(&mp, k, -h)))
                    / (2.0 * h);
                assert!((fd - dg[k]).amax() < 1e-8 * (1.0 + dg[k].amax()));
            }
        }
    }

    #[test]
    fn drift_jacobian_and_divergence_hessian_match_differences() {
        for (fv, mp) in sample_points() {
            let h = fd_step(&mp);
            let jac = drift_jacobian(&fv, &mp);
            let dh = divergence_hessian(&fv, &mp);
            for l in 0..3 {
                let fd = (drift_vector(&fv, &shifted(&mp, l, h)) - drift_vector(&fv, &shifted(&mp, l, -h)))
                    / (2.0 * h);
                for i in 0..3 {
                    assert!((fd[i] - jac[(i, l)]).abs() < 1e-8 * (1.0 + jac.amax()));
                }
                // d_i d_k D^{ij} from the Hessian bundle, differenced in p^l.
                let contract = |m: &MomentumPoint| {
                    let t = diffusion_derivatives(&fv, m);
                    Matrix3::from_fn(|j, k| (0..3).map(|i| t.d_hess[k][i][(i, j)]).sum::<f64>())
                };
                let fd2 = (contract(&shifted(&mp, l, h)) - contract(&shifted(&mp, l, -h))) / (2.0 * h);
                assert!((fd2 - dh[l]).amax() < 1e-7 * (1.0 + dh[l].amax()), "l={l}");
            }
        }
    }

    #[test]
    fn spherical_contraction() {
        for (fv, mp) in sample_points() {
            let d = diffusion_matrix(&fv, &mp);
            let s = (fv.exp2phi() + mp.q() * mp.q()).sqrt();
            let lhs = d * mp.p();
            assert!((lhs - mp.p() * s).amax() <= 1e-14 * (1.0 + mp.q() * s));
        }
    }

    #[test]
    fn diffusion_is_positive_definite_and_bounded() {
        for (fv, mp) in sweep_points(13, 31, (-10.0, 2.0), 100.0) {
            let d = diffusion_matrix(&fv, &mp);
            let s = (fv.exp2phi() + mp.q() * mp.q()).sqrt();
            let eig = d.symmetric_eigenvalues();
            assert!(eig.iter().all(|&l| l > 0.0));
            assert!(eig.iter().all(|&l| l <= s * (1.0 + 1e-14)));
        }
    }

    #[test]
    fn appendix_bounds_hold_with_frozen_constants() {
        let worst = sweep_points(100, 100, (-10.0, 2.0), 100.0)
            .iter()
            .map(|(fv, mp)| AppendixRatios::at(fv, mp))
            .fold(AppendixRatios::default(), AppendixRatios::max);
        for ((name, got), (_, c)) in worst.entries().iter().zip(APPENDIX_CONSTANTS.entries()) {
            assert!(got <= &c, "{name}: observed {got} above frozen {c}");
        }
    }

    #[test]
    fn lipschitz_bounds_hold_with_frozen_constants() {
        let pts = sweep_points(100, 100, (-10.0, 2.0), 100.0);
        for (n, (fv, mp)) in pts.iter().enumerate() {
            let phi2 = -10.0 + 12.0 * ((n as f64 * 0.618_033_988_749_894_9).fract());
            let (a, b) = lipschitz_ratios(fv.phi(), phi2, mp);
            assert!(a <= LIPSCHITZ_CONSTANTS.0, "{a}");
            assert!(b <= LIPSCHITZ_CONSTANTS.1, "{b}");
        }
    }
}
