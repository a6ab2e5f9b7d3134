//! Spherically symmetric initial data `q -> f(q)`.

use serde::{Deserialize, Serialize};

/// A nonnegative radial profile.
pub trait RadialProfile: Send + Sync {
    fn eval(&self, q: f64) -> f64;

    /// Momentum beyond which the profile is below `1e-17` of its maximum.
    /// Integrals over the profile may be truncated there.
    fn cutoff(&self) -> f64 {
        f64::INFINITY
    }
}

/// Named presets understood by the configuration layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Zero,
    Constant { value: f64 },
    /// `amplitude * exp(-rate * q)`
    Exponential { amplitude: f64, rate: f64 },
    /// `amplitude * exp(-rate * q^2)`
    Gaussian { amplitude: f64, rate: f64 },
}

impl Profile {
    /// `e^{-q}`, the datum used throughout the reference runs.
    pub const fn exp() -> Self {
        Profile::Exponential {
            amplitude: 1.0,
            rate: 1.0,
        }
    }
}

impl RadialProfile for Profile {
    fn eval(&self, q: f64) -> f64 {
        match *self {
            Profile::Zero => 0.0,
            Profile::Constant { value } => value,
            Profile::Exponential { amplitude, rate } => amplitude * (-rate * q).exp(),
            Profile::Gaussian { amplitude, rate } => amplitude * (-rate * q * q).exp(),
        }
    }

    fn cutoff(&self) -> f64 {
        // ln(1e17) ~ 39.1
        const DECADES: f64 = 39.2;
        match *self {
            Profile::Zero => 0.0,
            Profile::Constant { .. } => f64::INFINITY,
            Profile::Exponential { rate, .. } => DECADES / rate,
            Profile::Gaussian { rate, .. } => (DECADES / rate).sqrt(),
        }
    }
}

/// Adapts a closure into a [`RadialProfile`].
pub struct FnProfile<F> {
    f: F,
    cutoff: f64,
}

impl<F: Fn(f64) -> f64 + Send + Sync> FnProfile<F> {
    pub fn new(f: F, cutoff: f64) -> Self {
        Self { f, cutoff }
    }
}

impl<F: Fn(f64) -> f64 + Send + Sync> RadialProfile for FnProfile<F> {
    fn eval(&self, q: f64) -> f64 {
        (self.f)(q)
    }

    fn cutoff(&self) -> f64 {
        self.cutoff
    }
}

impl<P: RadialProfile + ?Sized> RadialProfile for &P {
    fn eval(&self, q: f64) -> f64 {
        (**self).eval(q)
    }

    fn cutoff(&self) -> f64 {
        (**self).cutoff()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_evaluate_and_cut_off() {
        let p = Profile::exp();
        assert_eq!(p.eval(0.0), 1.0);
        assert!(p.eval(p.cutoff()) < 1e-17);
        let g = Profile::Gaussian {
            amplitude: 2.0,
            rate: 0.25,
        };
        assert!(g.eval(g.cutoff()) < 2e-17);
        assert_eq!(Profile::Zero.eval(3.0), 0.0);
    }
}
